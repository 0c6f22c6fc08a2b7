#pragma once

#include <string>
#include <vector>

#include "hanmt/inspect.hpp"
#include "hanmt/report.hpp"
#include "hanmt/synthetic.hpp"
#include "hanmt/trainer.hpp"

namespace hanmt {

struct CorpusTranslation {
    SideDocuments sentences;
    std::vector<TraceRecord> traces;
};

/// Translates every document sequentially with a fresh cache per document.
/// Documents are named "doc<i>" in the traces.
CorpusTranslation translate_corpus(const Model& model, const SideDocuments& source, const Vocabulary& source_vocab,
                                   const Vocabulary& target_vocab, const TranslateOptions& options);

/// The two-stage synthetic context experiment end to end.
struct ExperimentConfig {
    SyntheticConfig train_data;
    SyntheticConfig test_data;
    ModelConfig model;  // vocabulary sizes are filled in from the data
    TrainConfig stage1;
    TrainConfig stage2;
    TranslateOptions decode;
    /// Artifacts (checkpoints, vocabularies, translations, reports) go here when set.
    std::string out_dir;
};

struct ExperimentResult {
    Ratio stage1_accuracy;
    Ratio stage2_accuracy;
    BleuResult stage1_bleu;
    BleuResult stage2_bleu;
    double stage1_seconds = 0.0;
    double stage2_seconds = 0.0;
    double decode_seconds = 0.0;
};

/// Ready-made settings sized for one CPU core (a few minutes).
ExperimentConfig default_experiment(std::uint64_t seed = 1);

ExperimentResult run_synthetic_experiment(const ExperimentConfig& config);

/// Artifact file names inside ExperimentConfig::out_dir.
inline constexpr const char* kStage1Checkpoint = "stage1.ckpt";
inline constexpr const char* kStage2Checkpoint = "stage2.ckpt";

/// Vocabulary files stored next to a checkpoint.
std::string source_vocab_path(const std::string& checkpoint_path);
std::string target_vocab_path(const std::string& checkpoint_path);

}  // namespace hanmt
