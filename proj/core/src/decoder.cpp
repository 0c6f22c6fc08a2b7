#include "hanmt/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <fmt/format.h>

#include "hanmt/ops.hpp"

namespace hanmt {
namespace {

std::vector<double> log_softmax_row(const double* row, std::size_t n) {
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(row[i] - mx);
    const double lz = mx + std::log(z);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = row[i] - lz;
    return out;
}

void check_penalty(double length_penalty) {
    if (!(length_penalty >= 0.0)) throw ConfigError(fmt::format("length penalty {} must be >= 0", length_penalty));
}

}  // namespace

double normalized_score(const Hypothesis& h, double length_penalty) {
    if (h.tokens.empty()) return h.score;
    return h.score / std::pow(static_cast<double>(h.tokens.size()), length_penalty);
}

std::vector<Hypothesis> beam_step(const std::vector<Hypothesis>& alive, const Tensor& logits, std::size_t beam_size,
                                  double length_penalty) {
    if (beam_size == 0) throw ConfigError("beam size must be at least 1");
    check_penalty(length_penalty);
    if (logits.rank() != 2 || logits.dim(0) != alive.size()) {
        throw DimensionError(fmt::format("beam_step expects logits [{}, vocab], got {}", alive.size(),
                                         shape_str(logits.shape())));
    }
    const std::size_t vocab = logits.dim(1);

    struct Candidate {
        double key;
        std::size_t parent;
        int token;  // -1 carries a finished hypothesis over unchanged
        double score;
    };
    std::vector<Candidate> cands;
    cands.reserve(alive.size() * vocab);
    for (std::size_t i = 0; i < alive.size(); ++i) {
        const Hypothesis& h = alive[i];
        if (h.finished) {
            cands.push_back({normalized_score(h, length_penalty), i, -1, h.score});
            continue;
        }
        const auto lp = log_softmax_row(logits.ptr() + i * vocab, vocab);
        const double len_norm = std::pow(static_cast<double>(h.tokens.size() + 1), length_penalty);
        for (std::size_t v = 0; v < vocab; ++v) {
            const double s = h.score + lp[v];
            cands.push_back({s / len_norm, i, static_cast<int>(v), s});
        }
    }
    const std::size_t keep = std::min(beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                          if (a.key != b.key) return a.key > b.key;
                          if (a.parent != b.parent) return a.parent < b.parent;
                          return a.token < b.token;
                      });
    std::vector<Hypothesis> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        const Candidate& c = cands[i];
        Hypothesis h = alive[c.parent];
        if (c.token >= 0) {
            h.tokens.push_back(c.token);
            h.score = c.score;
            h.finished = c.token == kEosId;
        }
        out.push_back(std::move(h));
    }
    return out;
}

Hypothesis beam_search(const PrefixScorer& scorer, const BeamConfig& config) {
    if (config.beam_size == 0) throw ConfigError("beam size must be at least 1");
    if (config.max_len == 0) throw ConfigError("max_len must be at least 1");
    check_penalty(config.length_penalty);
    const double max_norm = std::pow(static_cast<double>(config.max_len), config.length_penalty);

    std::vector<Hypothesis> alive{Hypothesis{}};
    std::optional<Hypothesis> best;
    auto offer = [&](Hypothesis h) {
        if (!best || normalized_score(h, config.length_penalty) > normalized_score(*best, config.length_penalty)) {
            best = std::move(h);
        }
    };
    for (std::size_t t = 0; t < config.max_len && !alive.empty(); ++t) {
        std::vector<std::vector<int>> prefixes;
        prefixes.reserve(alive.size());
        for (const auto& h : alive) prefixes.push_back(h.tokens);
        const Tensor logits = scorer(prefixes);
        std::vector<Hypothesis> next;
        for (Hypothesis& h : beam_step(alive, logits, config.beam_size, config.length_penalty)) {
            if (!h.finished && h.tokens.size() >= config.max_len) h.finished = true;
            if (h.finished) {
                offer(std::move(h));
            } else {
                next.push_back(std::move(h));
            }
        }
        alive = std::move(next);
        if (best && !alive.empty()) {
            // scores only fall as tokens append, so s / max_len^penalty bounds every continuation
            double bound = -std::numeric_limits<double>::infinity();
            for (const auto& h : alive) bound = std::max(bound, h.score / max_norm);
            if (normalized_score(*best, config.length_penalty) >= bound) break;
        }
    }
    return *best;
}

Hypothesis greedy_search(const PrefixScorer& scorer, std::size_t max_len) {
    Hypothesis h;
    while (h.tokens.size() < max_len) {
        const Tensor logits = scorer({h.tokens});
        const std::size_t vocab = logits.dim(1);
        const auto lp = log_softmax_row(logits.ptr(), vocab);
        const auto best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        h.tokens.push_back(best);
        h.score += lp[static_cast<std::size_t>(best)];
        if (best == kEosId) break;
    }
    h.finished = true;
    return h;
}

std::size_t max_target_length(std::size_t source_tokens, const TranslateOptions& options, std::size_t model_max_len) {
    const auto scaled = static_cast<std::size_t>(std::ceil(options.max_len_factor * static_cast<double>(source_tokens)));
    return std::min(std::max(scaled, options.min_max_len), model_max_len);
}

DocumentTranslation translate_document(const Model& model, const std::vector<std::vector<int>>& sources,
                                       const TranslateOptions& options) {
    if (options.beam_size == 0) throw ConfigError("beam size must be at least 1");
    DocumentTranslation out;
    ContextCache cache = model.make_cache();
    const std::size_t vocab = model.config().vocab_tgt;
    // target_in carries bos, so emitted tokens (eos included) get max_len - 1 positions
    const std::size_t model_limit = model.config().max_len - 1;

    for (std::size_t index = 0; index < sources.size(); ++index) {
        const std::vector<int>& source = sources[index];
        const TraceSink sink = [&](const AttentionTrace& t) { out.traces.push_back({index, t}); };
        const TraceSink* trace = options.collect_traces ? &sink : nullptr;

        ParamBinding binding(false);
        ForwardContext ctx{binding};
        ctx.trace = trace;
        const Encoded enc = model.encode(ctx, source, cache);

        const PrefixScorer scorer = [&](const std::vector<std::vector<int>>& prefixes) {
            Tensor logits({prefixes.size(), vocab});
            for (std::size_t i = 0; i < prefixes.size(); ++i) {
                ParamBinding b(false);
                const ForwardContext c{b};
                std::vector<int> target_in{kBosId};
                target_in.insert(target_in.end(), prefixes[i].begin(), prefixes[i].end());
                const Decoded dec = model.decode(c, target_in, enc, cache);
                const std::size_t last = target_in.size() - 1;
                const Var row = model.classify(c, slice_rows(dec.final, last, last + 1));
                double* out_row = logits.ptr() + i * vocab;
                std::copy_n(row.value().ptr(), vocab, out_row);
                // padding and a second bos are never valid output
                out_row[kPadId] = -std::numeric_limits<double>::infinity();
                out_row[kBosId] = -std::numeric_limits<double>::infinity();
            }
            return logits;
        };
        const std::size_t words = source.empty() || source.back() != kEosId ? source.size() : source.size() - 1;
        BeamConfig beam{options.beam_size, options.length_penalty, max_target_length(words, options, model_limit)};
        Hypothesis best = beam_search(scorer, beam);
        if (!best.tokens.empty() && best.tokens.back() == kEosId) best.tokens.pop_back();

        std::vector<int> target_in{kBosId};
        target_in.insert(target_in.end(), best.tokens.begin(), best.tokens.end());
        const Decoded forced = model.decode(ctx, target_in, enc, cache);
        model.push_context(cache, enc, forced);
        out.sentences.push_back(std::move(best.tokens));
    }
    return out;
}

}  // namespace hanmt
