#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hanmt/model.hpp"

namespace hanmt {

struct Hypothesis {
    std::vector<int> tokens;  // emitted ids; ends with eos when finished by eos
    double score = 0.0;       // sum of token log-probabilities
    bool finished = false;

    friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

/// score / length^penalty; length counts every emitted token including eos.
double normalized_score(const Hypothesis& h, double length_penalty);

/// Expands every alive hypothesis by every token of its logits row
/// ([alive, vocab], log-softmaxed here) and keeps the best `beam_size` by
/// normalized score. Ties go to the lower parent index, then the lower token id.
/// Candidates ending in eos come back finished.
std::vector<Hypothesis> beam_step(const std::vector<Hypothesis>& alive, const Tensor& logits, std::size_t beam_size,
                                  double length_penalty);

/// Returns next-token logits [prefixes, vocab] for each prefix (bos excluded).
using PrefixScorer = std::function<Tensor(const std::vector<std::vector<int>>& prefixes)>;

struct BeamConfig {
    std::size_t beam_size = 1;
    double length_penalty = 0.6;
    /// Hypotheses still alive after this many tokens are closed as they are.
    std::size_t max_len = 32;
};

/// Best hypothesis by normalized score. Stops once no alive hypothesis can
/// overtake the best finished one.
Hypothesis beam_search(const PrefixScorer& scorer, const BeamConfig& config);

/// Step-by-step argmax (lowest id on ties) up to eos or max_len.
Hypothesis greedy_search(const PrefixScorer& scorer, std::size_t max_len);

struct TranslateOptions {
    std::size_t beam_size = 1;
    double length_penalty = 0.6;
    double max_len_factor = 1.5;
    std::size_t min_max_len = 5;
    /// Collect HAN attention traces from the forced pass.
    bool collect_traces = false;
};

/// Longest allowed target for a source of `source_tokens` words.
std::size_t max_target_length(std::size_t source_tokens, const TranslateOptions& options, std::size_t model_max_len);

struct SentenceTrace {
    std::size_t sentence = 0;
    AttentionTrace trace;
};

struct DocumentTranslation {
    std::vector<std::vector<int>> sentences;  // without bos/eos
    std::vector<SentenceTrace> traces;
};

/// Translates sentences in order with one fresh cache. After each sentence the
/// chosen output is re-run teacher-forced and those states enter the cache.
/// `sources` are id sequences ending in eos. Padding and bos are never emitted.
DocumentTranslation translate_document(const Model& model, const std::vector<std::vector<int>>& sources,
                                       const TranslateOptions& options);

}  // namespace hanmt
