#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "hanmt/corpus.hpp"
#include "hanmt/synthetic.hpp"

namespace hanmt {

struct BleuResult {
    double score = 0.0;  // 0..100
    std::vector<double> precisions;
    double brevity_penalty = 0.0;
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;
};

/// Corpus-level BLEU with clipped n-gram counts and brevity penalty. Documents
/// and sentences must align one to one.
BleuResult bleu(const SideDocuments& candidates, const SideDocuments& references, std::size_t max_n = 4);

/// hits / total, undefined when total is 0.
struct Ratio {
    std::size_t hits = 0;
    std::size_t total = 0;
    std::optional<double> value() const {
        if (total == 0) return std::nullopt;
        return static_cast<double>(hits) / static_cast<double>(total);
    }
    Ratio& operator+=(const Ratio& o) {
        hits += o.hits;
        total += o.total;
        return *this;
    }
};

using WordSet = std::set<std::string, std::less<>>;

/// Target-side word matching: every reference occurrence of a listed word is
/// a hit when the aligned candidate sentence has the same word, not yet used,
/// within +-window positions (nearest first, then leftmost).
Ratio word_list_accuracy(const Sentence& candidate, const Sentence& reference, const WordSet& words, std::size_t window);
Ratio word_list_accuracy(const SideDocuments& candidates, const SideDocuments& references, const WordSet& words,
                         std::size_t window = 3);

/// Symmetric word-to-similar-words map.
using SynonymLexicon = std::unordered_map<std::string, std::vector<std::string>>;

/// Content tokens (non-stopwords, lowercased) that repeat or are lexicon-similar
/// to an earlier content token of the same document.
Ratio lexical_cohesion(const std::vector<Sentence>& document, const WordSet& stopwords,
                       const SynonymLexicon* lexicon = nullptr);

using Embeddings = std::unordered_map<std::string, std::vector<double>>;

struct CoherenceResult {
    std::optional<double> score;  // mean cosine of consecutive sentences
    std::size_t pairs = 0;
    std::size_t skipped = 0;  // pairs with a sentence lacking any known word
};
CoherenceResult coherence(const std::vector<Sentence>& document, const Embeddings& embeddings);

/// Share of ground-truth ambiguous tokens translated correctly at their position.
Ratio ambiguity_accuracy(const SideDocuments& candidates, const std::vector<GroundTruth>& truth);

/// One word per line; '#' lines and blanks ignored. Words are lowercased.
WordSet load_word_list(const std::string& path);
/// Two words per line, used in both directions.
SynonymLexicon load_lexicon(const std::string& path);
/// "word v1 v2 ..." per line; an optional "count dim" first line is skipped.
Embeddings load_embeddings(const std::string& path);

std::string to_lower(std::string_view s);

}  // namespace hanmt
