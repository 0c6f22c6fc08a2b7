#include "hanmt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "hanmt/ops.hpp"

namespace hanmt {
namespace {

constexpr std::uint64_t kShuffleSalt = 0x9E3779B97F4A7C15ULL;

struct SentenceForward {
    Encoded enc;
    Decoded dec;
    Var logits;
    Var loss;
};

SentenceForward forward_sentence(const Model& model, const ForwardContext& ctx, const EncodedPair& pair,
                                 const ContextCache& cache, double smoothing) {
    Encoded enc = model.encode(ctx, pair.source, cache);
    Decoded dec = model.decode(ctx, pair.target_in, enc, cache);
    Var logits = model.classify(ctx, dec.final);
    Var loss = cross_entropy_smoothed(logits, pair.target_out, smoothing, kPadId);
    return {std::move(enc), std::move(dec), std::move(logits), std::move(loss)};
}

std::vector<Tensor> snapshot_values(const ParameterSet& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p->value);
    return out;
}

void restore_values(ParameterSet& params, const std::vector<Tensor>& values) {
    std::size_t i = 0;
    for (auto& p : params) p->value = values[i++];
}

}  // namespace

void TrainConfig::validate() const {
    if (warmup_steps < 1) throw ConfigError("warmup_steps must be at least 1");
    if (max_tokens_per_step == 0) throw ConfigError("max_tokens_per_step must be positive");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
        throw ConfigError(fmt::format("label_smoothing {} outside [0, 1)", label_smoothing));
    }
    if (stage != 1 && stage != 2) throw ConfigError(fmt::format("stage must be 1 or 2, got {}", stage));
    if (!(lr_scale > 0.0)) throw ConfigError("lr_scale must be positive");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
}

KeyValues TrainConfig::to_key_values() const {
    KeyValues kv;
    kv["warmup_steps"] = std::to_string(warmup_steps);
    kv["max_steps"] = std::to_string(max_steps);
    kv["max_tokens_per_step"] = std::to_string(max_tokens_per_step);
    kv["label_smoothing"] = fmt::format("{}", label_smoothing);
    kv["seed"] = std::to_string(seed);
    kv["checkpoint_interval"] = std::to_string(checkpoint_interval);
    kv["stage"] = std::to_string(stage);
    kv["lr_scale"] = fmt::format("{}", lr_scale);
    kv["clip_norm"] = fmt::format("{}", clip_norm);
    return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv, const TrainConfig& base) {
    TrainConfig c = base;
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto* v = get("warmup_steps")) c.warmup_steps = parse_size("warmup_steps", *v);
    if (auto* v = get("max_steps")) c.max_steps = parse_size("max_steps", *v);
    if (auto* v = get("max_tokens_per_step")) c.max_tokens_per_step = parse_size("max_tokens_per_step", *v);
    if (auto* v = get("label_smoothing")) c.label_smoothing = parse_double("label_smoothing", *v);
    if (auto* v = get("seed")) c.seed = parse_size("seed", *v);
    if (auto* v = get("checkpoint_interval")) c.checkpoint_interval = parse_size("checkpoint_interval", *v);
    if (auto* v = get("stage")) c.stage = static_cast<int>(parse_size("stage", *v));
    if (auto* v = get("lr_scale")) c.lr_scale = parse_double("lr_scale", *v);
    if (auto* v = get("clip_norm")) c.clip_norm = parse_double("clip_norm", *v);
    return c;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, TrainConfig{}); }

double lr_schedule(std::size_t step, std::size_t d_model, std::size_t warmup) {
    if (step == 0) throw ConfigError("the learning-rate schedule starts at step 1");
    if (warmup == 0) throw ConfigError("warmup must be at least 1");
    if (d_model == 0) throw ConfigError("d_model must be positive");
    const auto s = static_cast<double>(step);
    const auto w = static_cast<double>(warmup);
    return std::pow(static_cast<double>(d_model), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
    for (const auto& p : params) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::step(double lr) {
    ++step_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    std::size_t i = 0;
    for (auto& p : *params_) {
        auto value = p->value.data();
        auto grad = p->grad.data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grad[j];
            m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * g);
            v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * g * g);
            const double update = lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
            value[j] = static_cast<float>(value[j] - update);
        }
        ++i;
    }
}

OptimizerState Adam::state() const {
    OptimizerState s;
    s.step = step_;
    for (const auto& p : *params_) s.names.push_back(p->name);
    s.first_moment = m_;
    s.second_moment = v_;
    return s;
}

void Adam::load_state(const OptimizerState& state) {
    if (state.names.size() != params_->size()) {
        throw CheckpointError(fmt::format("optimizer state covers {} parameters, model has {}", state.names.size(),
                                          params_->size()));
    }
    std::size_t i = 0;
    for (const auto& p : *params_) {
        if (state.names[i] != p->name || state.first_moment[i].shape() != p->value.shape() ||
            state.second_moment[i].shape() != p->value.shape()) {
            throw CheckpointError(fmt::format("optimizer state entry {} ('{}') does not match parameter '{}'", i,
                                              state.names[i], p->name));
        }
        ++i;
    }
    step_ = state.step;
    m_ = state.first_moment;
    v_ = state.second_moment;
}

double gradient_norm(const ParameterSet& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p->grad.data()) sq += g * g;
    }
    return std::sqrt(sq);
}

double clip_gradients(ParameterSet& params, double max_norm) {
    const double norm = gradient_norm(params);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& p : params) {
            for (double& g : p->grad.data()) g *= s;
        }
    }
    return norm;
}

std::string format_step_record(const StepRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["stage"] = r.stage;
    j["loss"] = r.loss;
    j["lr"] = r.lr;
    j["tokens_per_sec"] = r.tokens_per_sec;
    return j.dump();
}

TeacherForcedStats evaluate_teacher_forced(const Model& model, const std::vector<EncodedDocument>& docs,
                                           double label_smoothing, bool first_sentences_only) {
    TeacherForcedStats stats;
    double loss_sum = 0.0;
    for (const auto& doc : docs) {
        ContextCache cache = model.make_cache();
        for (const auto& pair : doc.pairs) {
            ParamBinding binding(false);
            const ForwardContext ctx{binding};
            SentenceForward f = forward_sentence(model, ctx, pair, cache, label_smoothing);
            const Tensor& logits = f.logits.value();
            const std::size_t vocab = logits.dim(1);
            for (std::size_t t = 0; t < pair.target_out.size(); ++t) {
                const double* row = logits.ptr() + t * vocab;
                const auto best = static_cast<int>(std::max_element(row, row + vocab) - row);
                if (best == pair.target_out[t]) ++stats.correct;
            }
            stats.tokens += pair.target_out.size();
            loss_sum += f.loss.value().item() * static_cast<double>(pair.target_out.size());
            if (first_sentences_only) break;
            model.push_context(cache, f.enc, f.dec);
        }
    }
    stats.loss = stats.tokens == 0 ? 0.0 : loss_sum / static_cast<double>(stats.tokens);
    return stats;
}

TrainResult train(Model& model, const std::vector<EncodedDocument>& docs, const TrainConfig& config,
                  const std::vector<EncodedDocument>* dev) {
    config.validate();
    const ModelConfig& mc = model.config();
    if (config.stage == 1 && mc.han_mode != HanMode::none) {
        throw ConfigError("stage-1 training runs the context-free model (han_mode none)");
    }
    std::size_t corpus_tokens = 0;
    for (const auto& d : docs) {
        for (const auto& p : d.pairs) corpus_tokens += p.target_out.size();
    }
    if (corpus_tokens == 0) throw ConfigError("training corpus is empty");

    ParameterSet& params = model.parameters();
    Adam adam(params);
    Rng dropout_rng(config.seed);
    Rng shuffle_rng(config.seed ^ kShuffleSalt);
    const bool with_context = mc.han_mode != HanMode::none && mc.k > 0;
    const ContextCache no_context = model.make_cache();
    std::vector<ContextCache> caches;
    if (with_context) caches.assign(docs.size(), model.make_cache());

    std::ofstream log;
    if (!config.log_path.empty()) {
        log.open(config.log_path, std::ios::trunc);
        if (!log) throw std::runtime_error(fmt::format("cannot write training log '{}'", config.log_path));
    }
    const KeyValues metadata{{"stage", std::to_string(config.stage)}};

    TrainResult result;
    std::vector<Tensor> best_values;
    auto check_dev = [&](std::size_t step) {
        if (dev == nullptr) return;
        const double loss = evaluate_teacher_forced(model, *dev, config.label_smoothing).loss;
        spdlog::info("stage {} step {}: dev loss {:.4f}", config.stage, step, loss);
        if (!result.best_dev_loss || loss < *result.best_dev_loss) {
            result.best_dev_loss = loss;
            result.best_step = step;
            best_values = snapshot_values(params);
        }
    };

    std::size_t step = 0;
    while (step < config.max_steps) {
        const BatchPlan plan = plan_batches(docs, config.max_tokens_per_step, shuffle_rng());
        for (const auto& batch : plan.steps) {
            if (step >= config.max_steps) break;
            const auto started = std::chrono::steady_clock::now();
            params.zero_grad();
            std::size_t target_tokens = 0;
            std::size_t seen_tokens = 0;
            for (const SentenceRef& ref : batch) {
                const EncodedPair& pair = docs[ref.doc].pairs[ref.index];
                target_tokens += pair.target_out.size();
                seen_tokens += pair.source.size() + pair.target_out.size();
            }
            double step_loss = 0.0;
            for (const SentenceRef& ref : batch) {
                const EncodedPair& pair = docs[ref.doc].pairs[ref.index];
                ContextCache* cache = with_context ? &caches[ref.doc] : nullptr;
                if (cache != nullptr && ref.index == 0) cache->reset();
                ParamBinding binding(true);
                const ForwardContext ctx{binding, true, &dropout_rng};
                SentenceForward f =
                    forward_sentence(model, ctx, pair, cache != nullptr ? *cache : no_context, config.label_smoothing);
                const double loss = f.loss.value().item();
                if (!std::isfinite(loss)) {
                    throw NumericError(fmt::format("non-finite loss at stage {} step {} ({}, sentence {})", config.stage,
                                                   step + 1, docs[ref.doc].id, ref.index));
                }
                f.loss.backward();
                const double weight = static_cast<double>(pair.target_out.size()) / static_cast<double>(target_tokens);
                binding.accumulate_grads(weight);
                step_loss += weight * loss;
                if (cache != nullptr) model.push_context(*cache, f.enc, f.dec);
            }
            if (config.clip_norm > 0.0) clip_gradients(params, config.clip_norm);
            ++step;
            const double lr = config.lr_scale * lr_schedule(step, mc.d_model, config.warmup_steps);
            adam.step(lr);

            const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
            const StepRecord rec{step, config.stage, step_loss, lr,
                                 elapsed.count() > 0.0 ? static_cast<double>(seen_tokens) / elapsed.count() : 0.0};
            result.log.push_back(rec);
            result.final_loss = step_loss;
            if (log) log << format_step_record(rec) << '\n';
            if (step % 100 == 0) spdlog::debug("stage {} step {}: loss {:.4f} lr {:.3g}", config.stage, step, step_loss, lr);

            if (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0) {
                check_dev(step);
                if (!config.checkpoint_path.empty()) {
                    const OptimizerState state = adam.state();
                    save_checkpoint(config.checkpoint_path + ".latest", mc, params, &state, metadata);
                }
            }
        }
    }
    if (dev != nullptr && result.best_step != step) check_dev(step);
    if (!best_values.empty() && result.best_step != step) {
        spdlog::info("stage {}: keeping parameters from step {} (best dev loss {:.4f})", config.stage,
                     result.best_step, *result.best_dev_loss);
        restore_values(params, best_values);
    }
    result.optimizer = adam.state();
    if (!config.checkpoint_path.empty()) {
        save_checkpoint(config.checkpoint_path, mc, params, &result.optimizer, metadata);
    }
    return result;
}

Stage1Output train_stage1(ModelConfig config, const std::vector<EncodedDocument>& docs, const TrainConfig& train_config,
                          const std::vector<EncodedDocument>* dev) {
    config.han_mode = HanMode::none;
    TrainConfig tc = train_config;
    tc.stage = 1;
    Model model(config, tc.seed);
    TrainResult result = train(model, docs, tc, dev);
    return {std::move(model), std::move(result)};
}

Model model_from_stage1(const Checkpoint& stage1, const ModelConfig& target, std::uint64_t init_seed) {
    if (!target.transformer_compatible(stage1.config)) {
        throw ConfigError(fmt::format(
            "checkpoint transformer (d_model {}, heads {}, layers {}+{}, d_ff {}, vocab {}/{}) does not match the "
            "target (d_model {}, heads {}, layers {}+{}, d_ff {}, vocab {}/{})",
            stage1.config.d_model, stage1.config.n_heads, stage1.config.n_layers_enc, stage1.config.n_layers_dec,
            stage1.config.d_ff, stage1.config.vocab_src, stage1.config.vocab_tgt, target.d_model, target.n_heads,
            target.n_layers_enc, target.n_layers_dec, target.d_ff, target.vocab_src, target.vocab_tgt));
    }
    Model model(target, init_seed);
    std::size_t fresh = 0;
    for (auto& p : model.parameters()) {
        if (p->name.starts_with("han.")) {
            ++fresh;
            continue;
        }
        auto it = std::find_if(stage1.parameters.begin(), stage1.parameters.end(),
                               [&](const NamedTensor& t) { return t.name == p->name; });
        if (it == stage1.parameters.end() || it->value.shape() != p->value.shape()) {
            throw ConfigError(fmt::format("checkpoint lacks a compatible '{}'", p->name));
        }
        p->value = it->value;
    }
    if (fresh > 0) {
        spdlog::info("loaded transformer weights; {} HAN tensors ({} mode) freshly initialized", fresh,
                     to_string(target.han_mode));
    }
    return model;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model model(ckpt.config, 0);
    const auto missing = assign_parameters(model.parameters(), ckpt);
    if (!missing.empty()) {
        throw CheckpointError(fmt::format("checkpoint lacks {} parameters, first '{}'", missing.size(), missing.front()));
    }
    if (ckpt.parameters.size() != model.parameters().size()) {
        throw CheckpointError(fmt::format("checkpoint holds {} tensors but the model has {}", ckpt.parameters.size(),
                                          model.parameters().size()));
    }
    return model;
}

Stage2Output train_stage2(const Checkpoint& stage1, const ModelConfig& target, const std::vector<EncodedDocument>& docs,
                          const TrainConfig& train_config, const std::vector<EncodedDocument>* dev) {
    TrainConfig tc = train_config;
    tc.stage = 2;
    tc.validate();
    Model model = model_from_stage1(stage1, target, tc.seed);
    TrainResult result = train(model, docs, tc, dev);
    return {std::move(model), std::move(result)};
}

Stage2Output train_stage2(const std::string& stage1_path, const ModelConfig& target,
                          const std::vector<EncodedDocument>& docs, const TrainConfig& train_config,
                          const std::vector<EncodedDocument>* dev) {
    return train_stage2(load_checkpoint(stage1_path), target, docs, train_config, dev);
}

}  // namespace hanmt
