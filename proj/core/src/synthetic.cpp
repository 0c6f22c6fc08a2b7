#include "hanmt/synthetic.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "hanmt/ops.hpp"
#include "hanmt/tensor.hpp"

namespace hanmt {
namespace {

constexpr std::string_view kTruthHeader = "# hanmt ground-truth v1";

std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)); }

}  // namespace

void SyntheticConfig::validate() const {
    if (doc_len < 2) throw ConfigError("synthetic documents need at least two sentences");
    if (m_alternatives < 1) throw ConfigError("m_alternatives must be at least 1");
    if (filler_vocab < 1) throw ConfigError("filler_vocab must be at least 1");
    if (min_sentence_len < 2 || max_sentence_len < min_sentence_len) {
        throw ConfigError("sentence lengths must satisfy 2 <= min <= max");
    }
    if (max_distance < 1) throw ConfigError("the antecedent cannot be placed within a context of zero sentences");
}

std::string antecedent_source_token(std::size_t a) { return fmt::format("ANT{}", a); }
std::string antecedent_target_token(std::size_t a) { return fmt::format("ant{}", a); }
std::string ambiguous_target_token(std::size_t a) { return fmt::format("amb{}", a); }

SyntheticCorpus gen_synthetic(const SyntheticConfig& config) {
    config.validate();
    Rng rng(config.seed);
    SyntheticCorpus out;
    out.documents.reserve(config.n_docs);
    for (std::size_t d = 0; d < config.n_docs; ++d) {
        Document doc{fmt::format("doc{}", d), {}};
        const std::size_t alternative = uniform_index(rng, config.m_alternatives);
        const std::size_t ante_sentence = uniform_index(rng, config.doc_len - 1);
        const std::size_t reach = std::min(config.max_distance, config.doc_len - 1 - ante_sentence);
        const std::size_t amb_sentence = ante_sentence + 1 + uniform_index(rng, reach);

        for (std::size_t s = 0; s < config.doc_len; ++s) {
            const std::size_t len =
                config.min_sentence_len + uniform_index(rng, config.max_sentence_len - config.min_sentence_len + 1);
            SentencePair pair;
            for (std::size_t i = 0; i < len; ++i) {
                const std::size_t w = uniform_index(rng, config.filler_vocab);
                pair.source.push_back(fmt::format("s{}", w));
                pair.target.push_back(fmt::format("t{}", w));
            }
            if (s == ante_sentence) {
                const std::size_t pos = uniform_index(rng, len);
                pair.source[pos] = antecedent_source_token(alternative);
                pair.target[pos] = antecedent_target_token(alternative);
            }
            if (s == amb_sentence) {
                const std::size_t pos = uniform_index(rng, len);
                pair.source[pos] = std::string(kAmbiguousToken);
                pair.target[pos] = ambiguous_target_token(alternative);
                out.truth.push_back({doc.id, s, pos, pair.target[pos]});
            }
            doc.pairs.push_back(std::move(pair));
        }
        out.documents.push_back(std::move(doc));
        out.antecedents.push_back(alternative);
    }
    return out;
}

std::string format_ground_truth(const std::vector<GroundTruth>& rows) {
    std::string out(kTruthHeader);
    out += '\n';
    for (const auto& r : rows) out += fmt::format("{}\t{}\t{}\t{}\n", r.doc_id, r.sentence, r.position, r.token);
    return out;
}

void write_ground_truth(const std::string& path, const std::vector<GroundTruth>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", path));
    out << format_ground_truth(rows);
}

std::vector<GroundTruth> load_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot open '{}'", path));
    std::string line;
    if (!std::getline(in, line) || line != kTruthHeader) {
        throw FormatError(fmt::format("'{}' lacks the '{}' header", path, kTruthHeader));
    }
    std::vector<GroundTruth> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        GroundTruth r;
        if (!(fields >> r.doc_id >> r.sentence >> r.position >> r.token)) {
            throw FormatError(fmt::format("'{}' line {}: expected doc, sentence, position, token", path, line_no));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace hanmt
