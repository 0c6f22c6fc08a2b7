#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hanmt/corpus.hpp"

namespace hanmt {

/// A controlled discourse task. Every document carries one antecedent token
/// (ANT<a>, one of m alternatives) in an early sentence. A later sentence,
/// at most `max_distance` sentences on, contains the ambiguous token AMB whose
/// only correct translation is amb<a>. Everything else is filler copied
/// word for word (s<i> -> t<i>), so a context-free model can do no better
/// than guess among the m alternatives.
struct SyntheticConfig {
    std::uint64_t seed = 1;
    std::size_t n_docs = 100;
    std::size_t doc_len = 4;
    std::size_t m_alternatives = 4;
    std::size_t filler_vocab = 20;
    std::size_t min_sentence_len = 3;
    std::size_t max_sentence_len = 7;
    std::size_t max_distance = 3;

    void validate() const;
};

/// Expected translation of one ambiguous token.
struct GroundTruth {
    std::string doc_id;
    std::size_t sentence = 0;
    std::size_t position = 0;
    std::string token;
    friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct SyntheticCorpus {
    std::vector<Document> documents;
    std::vector<GroundTruth> truth;
    /// Which alternative each document's antecedent picked.
    std::vector<std::size_t> antecedents;
};

SyntheticCorpus gen_synthetic(const SyntheticConfig& config);

inline constexpr std::string_view kAmbiguousToken = "AMB";
std::string antecedent_source_token(std::size_t alternative);
std::string antecedent_target_token(std::size_t alternative);
std::string ambiguous_target_token(std::size_t alternative);

/// Tab-separated "doc_id sentence position token" lines after a version header.
void write_ground_truth(const std::string& path, const std::vector<GroundTruth>& rows);
std::vector<GroundTruth> load_ground_truth(const std::string& path);
std::string format_ground_truth(const std::vector<GroundTruth>& rows);

}  // namespace hanmt
