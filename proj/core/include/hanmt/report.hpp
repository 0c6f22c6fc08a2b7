#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hanmt/metrics.hpp"

namespace hanmt {

/// What to evaluate. Optional resources switch the matching metric on.
struct EvalInputs {
    SideDocuments candidates;
    SideDocuments references;
    std::optional<WordSet> pronouns;
    std::optional<WordSet> nouns;
    std::size_t window = 3;
    std::optional<WordSet> stopwords;
    std::optional<SynonymLexicon> lexicon;
    std::optional<Embeddings> embeddings;
    std::optional<std::vector<GroundTruth>> truth;
};

struct DocumentReport {
    std::string id;
    double bleu = 0.0;
    std::optional<Ratio> cohesion;
    std::optional<CoherenceResult> coherence;
};

struct EvalReport {
    BleuResult bleu;
    std::optional<Ratio> pronoun_accuracy;
    std::optional<Ratio> noun_accuracy;
    /// Mean of the per-document ratios that are defined.
    std::optional<double> cohesion;
    std::size_t cohesion_documents = 0;
    std::optional<double> coherence;
    std::size_t coherence_documents = 0;
    std::size_t coherence_pairs = 0;
    std::size_t coherence_skipped = 0;
    std::optional<Ratio> ambiguity_accuracy;
    std::vector<DocumentReport> documents;
};

/// Cohesion and coherence run on the candidates.
EvalReport evaluate(const EvalInputs& inputs);

/// Human-readable summary plus per-document table.
std::string format_report_text(const EvalReport& report);
/// One "key=value ..." record per line; see docs/report-format.md.
std::string format_report_records(const EvalReport& report);

}  // namespace hanmt
