#include "hanmt/han.hpp"

#include <fmt/format.h>

namespace hanmt {

ContextCache::ContextCache(std::size_t capacity, bool track_target)
    : capacity_(capacity), track_target_(track_target) {}

void ContextCache::push(EncoderStates enc, std::optional<DecoderStates> dec) {
    if (dec.has_value() != track_target_) {
        throw ConfigError(track_target_ ? "context cache needs decoder states for target-side context"
                                        : "context cache does not track target-side context");
    }
    if (capacity_ == 0) return;
    source_.push_back(std::move(enc));
    if (dec.has_value()) target_.push_back(std::move(*dec));
    while (source_.size() > capacity_) source_.pop_front();
    while (target_.size() > capacity_) target_.pop_front();
}

void ContextCache::reset() {
    source_.clear();
    target_.clear();
}

std::string_view to_string(HanSite site) {
    switch (site) {
        case HanSite::encoder: return "enc";
        case HanSite::decoder_target: return "dec_target";
        case HanSite::decoder_source: return "dec_source";
        case HanSite::decoder_alignment: return "dec_alignment";
    }
    return "enc";
}

HanSite parse_han_site(std::string_view text) {
    for (HanSite s : {HanSite::encoder, HanSite::decoder_target, HanSite::decoder_source, HanSite::decoder_alignment}) {
        if (to_string(s) == text) return s;
    }
    throw ConfigError(fmt::format("unknown HAN site '{}'", text));
}

std::vector<HanSite> han_sites(HanMode mode) {
    switch (mode) {
        case HanMode::none: return {};
        case HanMode::encoder: return {HanSite::encoder};
        case HanMode::decoder: return {HanSite::decoder_target};
        case HanMode::decoder_source: return {HanSite::decoder_source};
        case HanMode::decoder_alignment: return {HanSite::decoder_alignment};
        case HanMode::joint: return {HanSite::encoder, HanSite::decoder_target};
    }
    return {};
}

HanBlock make_han_block(ParameterSet& params, const std::string& name, std::size_t d_model, std::size_t d_ff,
                        std::size_t heads, bool residual, double dropout, Rng& init_rng) {
    HanBlock block;
    block.word_query = make_linear(params, name + ".f_w", d_model, d_model, init_rng);
    block.sentence_query = make_linear(params, name + ".f_s", d_model, d_model, init_rng);
    block.word_attn = make_attention(params, name + ".word_attn", d_model, heads, init_rng);
    block.sentence_attn = make_attention(params, name + ".sentence_attn", d_model, heads, init_rng);
    block.ffn = make_feed_forward(params, name + ".ffn", d_model, d_ff, init_rng);
    block.word_norm = make_layer_norm(params, name + ".word_norm", d_model);
    block.sentence_norm = make_layer_norm(params, name + ".sentence_norm", d_model);
    block.ffn_norm = make_layer_norm(params, name + ".ffn_norm", d_model);
    // zero gate weights: lambda starts at 0.5 everywhere
    block.gate_h = &params.add(name + ".gate.w_h", Tensor({d_model, d_model}, 0.0));
    block.gate_d = &params.add(name + ".gate.w_d", Tensor({d_model, d_model}, 0.0));
    block.residual = residual;
    block.dropout = dropout;
    return block;
}

namespace {

Var as_rows(const Var& x) { return x.rank() == 1 ? reshape(x, {1, x.dim(0)}) : x; }

WordSummary summarize_sentence(const ForwardContext& ctx, const HanBlock& block, const Var& query, const Var& context,
                               const Tensor* keep_mask, std::string_view site) {
    if (context.rank() != 2 || context.dim(0) == 0) {
        throw DimensionError(fmt::format("word-level attention needs a non-empty [len, d] context, got {}",
                                         shape_str(context.shape())));
    }
    AttentionOutput attended = multi_head_attention(ctx, block.word_attn, query, context, context, keep_mask, site);
    Var out = attended.output;
    if (block.residual) out = add(out, query);
    return {apply(ctx, block.word_norm, out), attended.weights};
}

SentenceSummary summarize_document(const ForwardContext& ctx, const HanBlock& block, const Var& query,
                                   const Var& summaries, std::string_view site) {
    const std::size_t n = query.dim(0);
    const std::size_t d = query.dim(1);
    if (summaries.rank() != 3 || summaries.dim(0) != n || summaries.dim(2) != d || summaries.dim(1) == 0) {
        throw DimensionError(fmt::format("sentence-level attention: query {} with summaries {}",
                                         shape_str(query.shape()), shape_str(summaries.shape())));
    }
    Var q = reshape(query, {n, 1, d});
    AttentionOutput attended = multi_head_attention(ctx, block.sentence_attn, q, summaries, summaries, nullptr, site);
    Var out = reshape(attended.output, {n, d});
    if (block.residual) out = add(out, query);
    out = apply(ctx, block.sentence_norm, out);
    Var ffn = apply(ctx, block.ffn, out);
    if (block.residual) ffn = add(ffn, out);
    return {apply(ctx, block.ffn_norm, ffn), attended.weights};
}

}  // namespace

WordSummary word_level_summary(const ForwardContext& ctx, const HanBlock& block, const Var& h, const Var& context,
                               const Tensor* keep_mask) {
    Var rows = as_rows(h);
    WordSummary out = summarize_sentence(ctx, block, apply(ctx, block.word_query, rows), context, keep_mask, "han.word");
    if (h.rank() == 1) out.summary = reshape(out.summary, {h.dim(0)});
    return out;
}

SentenceSummary sentence_level_summary(const ForwardContext& ctx, const HanBlock& block, const Var& h,
                                       const Var& summaries) {
    Var rows = as_rows(h);
    Var sums = summaries.rank() == 2 ? reshape(summaries, {1, summaries.dim(0), summaries.dim(1)}) : summaries;
    SentenceSummary out = summarize_document(ctx, block, apply(ctx, block.sentence_query, rows), sums, "han.sentence");
    if (h.rank() == 1) out.context = reshape(out.context, {h.dim(0)});
    return out;
}

GateOutput context_gate(const ForwardContext& ctx, const HanBlock& block, const Var& h, const Var& d) {
    if (h.shape() != d.shape()) {
        throw DimensionError(fmt::format("context gate: h {} vs d {}", shape_str(h.shape()), shape_str(d.shape())));
    }
    Var lambda;
    if (block.gate_override.has_value()) {
        lambda = Var::constant(Tensor(h.shape(), *block.gate_override));
    } else {
        lambda = sigmoid(add(affine(h, ctx.bind(block.gate_h)), affine(d, ctx.bind(block.gate_d))));
    }
    Var blended = add(mul(lambda, h), mul(affine_scalar(lambda, -1.0, 1.0), d));
    return {blended, lambda};
}

Var han_apply(const ForwardContext& ctx, HanSite site, const Var& h, const ContextCache& cache, const HanBlock& block) {
    if (h.rank() != 2) throw DimensionError(fmt::format("han_apply expects [len, d], got {}", shape_str(h.shape())));
    const bool target_side = site == HanSite::decoder_target || site == HanSite::decoder_alignment;
    if (target_side && !cache.tracks_target()) {
        throw ConfigError(fmt::format("HAN site {} needs a cache with target-side context", to_string(site)));
    }
    const std::size_t k_eff = target_side ? cache.target().size() : cache.source().size();
    if (k_eff == 0) return h;

    const std::size_t n = h.dim(0);
    const std::string word_site = fmt::format("han.{}.word", to_string(site));
    const std::string sentence_site = fmt::format("han.{}.sentence", to_string(site));

    // one query per position, shared by every context sentence
    Var word_query = apply(ctx, block.word_query, h);
    std::vector<Var> summaries;
    std::vector<Var> word_weights;
    std::vector<const std::vector<int>*> context_tokens;
    summaries.reserve(k_eff);
    for (std::size_t j = 0; j < k_eff; ++j) {
        const Tensor* states = nullptr;
        const Tensor* mask = nullptr;
        if (site == HanSite::encoder || site == HanSite::decoder_source) {
            const EncoderStates& e = cache.source()[j];
            states = &e.states;
            mask = &e.keep_mask;
            context_tokens.push_back(&e.tokens);
        } else {
            const DecoderStates& e = cache.target()[j];
            states = site == HanSite::decoder_target ? &e.states : &e.alignment;
            context_tokens.push_back(&e.tokens);
        }
        Var context = Var::constant(*states);
        if (ctx.context_inputs != nullptr) ctx.context_inputs->push_back(context);
        WordSummary s = summarize_sentence(ctx, block, word_query, context, mask, word_site);
        summaries.push_back(s.summary);
        word_weights.push_back(s.weights);
    }
    Var stacked = stack(summaries, 1);  // [n, k_eff, d]
    SentenceSummary doc = summarize_document(ctx, block, apply(ctx, block.sentence_query, h), stacked, sentence_site);
    Var d_t = ctx.drop(doc.context, block.dropout);
    GateOutput gated = context_gate(ctx, block, h, d_t);

    if (ctx.trace != nullptr) {
        const std::size_t heads = block.word_attn.heads;
        const Tensor& sw = doc.weights.value();  // [n, heads, 1, k_eff]
        for (std::size_t t = 0; t < n; ++t) {
            AttentionTrace trace;
            trace.site = site;
            trace.position = t;
            trace.sentence_weights = Tensor({heads, k_eff});
            for (std::size_t hd = 0; hd < heads; ++hd) {
                for (std::size_t j = 0; j < k_eff; ++j) {
                    trace.sentence_weights[hd * k_eff + j] = sw[(t * heads + hd) * k_eff + j];
                }
            }
            for (std::size_t j = 0; j < k_eff; ++j) {
                const Tensor& ww = word_weights[j].value();  // [heads, n, len_j]
                const std::size_t len = ww.dim(2);
                Tensor row({heads, len});
                for (std::size_t hd = 0; hd < heads; ++hd) {
                    for (std::size_t i = 0; i < len; ++i) row[hd * len + i] = ww[(hd * n + t) * len + i];
                }
                trace.word_weights.push_back(std::move(row));
                trace.context_tokens.push_back(*context_tokens[j]);
            }
            (*ctx.trace)(trace);
        }
    }
    return gated.blended;
}

}  // namespace hanmt
