#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hanmt/checkpoint.hpp"
#include "hanmt/corpus.hpp"
#include "hanmt/model.hpp"

namespace hanmt {

struct TrainConfig {
    std::size_t warmup_steps = 4000;
    std::size_t max_steps = 1000;
    std::size_t max_tokens_per_step = 2000;
    double label_smoothing = 0.1;
    std::uint64_t seed = 1;
    /// Evaluate dev loss / write the rolling checkpoint every N steps; 0 = only at the end.
    std::size_t checkpoint_interval = 0;
    int stage = 1;
    /// Multiplies the warmup schedule.
    double lr_scale = 1.0;
    /// Global gradient-norm clip; 0 disables.
    double clip_norm = 1.0;
    /// Final checkpoint; periodic ones go to `<path>.latest`. Empty = none.
    std::string checkpoint_path;
    /// Line-delimited JSON training log. Empty = none.
    std::string log_path;

    void validate() const;
    KeyValues to_key_values() const;
    /// Reads the keys listed in docs/config-keys.md, ignoring model keys.
    static TrainConfig from_key_values(const KeyValues& kv);
    static TrainConfig from_key_values(const KeyValues& kv, const TrainConfig& base);
};

/// d^-0.5 * min(step^-0.5, step * warmup^-1.5); step counts from 1.
double lr_schedule(std::size_t step, std::size_t d_model, std::size_t warmup);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double epsilon = 1e-9;
};

/// Adam over every parameter of a set. Parameters and moments are rounded to
/// float after each update so checkpoints reproduce them exactly.
class Adam {
   public:
    explicit Adam(ParameterSet& params, AdamConfig config = {});

    void step(double lr);
    std::uint64_t steps() const { return step_; }

    OptimizerState state() const;
    /// Restores moments; names and shapes must match the parameter set.
    void load_state(const OptimizerState& state);

   private:
    ParameterSet* params_;
    AdamConfig config_;
    std::uint64_t step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

/// Scales gradients so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
double clip_gradients(ParameterSet& params, double max_norm);
double gradient_norm(const ParameterSet& params);

struct StepRecord {
    std::size_t step = 0;
    int stage = 1;
    double loss = 0.0;
    double lr = 0.0;
    double tokens_per_sec = 0.0;
};

/// {"step":..,"stage":..,"loss":..,"lr":..,"tokens_per_sec":..}
std::string format_step_record(const StepRecord& r);

struct TrainResult {
    std::vector<StepRecord> log;
    double final_loss = 0.0;
    std::optional<double> best_dev_loss;
    std::size_t best_step = 0;
    OptimizerState optimizer;
};

/// Teacher-forced evaluation over whole documents with gold context, no dropout.
struct TeacherForcedStats {
    double loss = 0.0;  // token-weighted mean
    std::size_t correct = 0;
    std::size_t tokens = 0;
    double accuracy() const { return tokens == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(tokens); }
};
TeacherForcedStats evaluate_teacher_forced(const Model& model, const std::vector<EncodedDocument>& docs,
                                           double label_smoothing, bool first_sentences_only = false);

/// The shared optimization loop. Documents are walked in plan order; each
/// document keeps its own context cache filled with gold-target states from
/// the same forward pass. Stage 1 requires han_mode none.
TrainResult train(Model& model, const std::vector<EncodedDocument>& docs, const TrainConfig& config,
                  const std::vector<EncodedDocument>* dev = nullptr);

struct Stage1Output {
    Model model;
    TrainResult result;
};
/// Builds a context-free model from `config` (han_mode forced to none) and
/// trains it. Writes the final checkpoint tagged stage=1 when a path is set.
Stage1Output train_stage1(ModelConfig config, const std::vector<EncodedDocument>& docs, const TrainConfig& train_config,
                          const std::vector<EncodedDocument>* dev = nullptr);

/// Builds a `target` model, copies transformer weights from the checkpoint and
/// leaves HAN parameters at their fresh initialization. ConfigError when the
/// architectures disagree.
Model model_from_stage1(const Checkpoint& stage1, const ModelConfig& target, std::uint64_t init_seed);

/// Rebuilds exactly the model stored in a checkpoint.
Model model_from_checkpoint(const Checkpoint& ckpt);

struct Stage2Output {
    Model model;
    TrainResult result;
};
/// Trains the whole network with HAN attached, starting from `stage1`.
Stage2Output train_stage2(const Checkpoint& stage1, const ModelConfig& target, const std::vector<EncodedDocument>& docs,
                          const TrainConfig& train_config, const std::vector<EncodedDocument>* dev = nullptr);
Stage2Output train_stage2(const std::string& stage1_path, const ModelConfig& target,
                          const std::vector<EncodedDocument>& docs, const TrainConfig& train_config,
                          const std::vector<EncodedDocument>* dev = nullptr);

}  // namespace hanmt
