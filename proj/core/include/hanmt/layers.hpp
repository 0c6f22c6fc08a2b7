#pragma once

#include <functional>
#include <string>
#include <string_view>

#include "hanmt/ops.hpp"
#include "hanmt/parameters.hpp"

namespace hanmt {

/// Called with every attention weight tensor a forward pass produces.
using AttentionObserver = std::function<void(std::string_view site, const Tensor& weights)>;

struct AttentionTrace;
using TraceSink = std::function<void(const AttentionTrace&)>;

/// Per-forward-pass state: which parameters to bind, train/eval mode, the
/// dropout generator and optional observers.
struct ForwardContext {
    ParamBinding& params;
    bool training = false;
    Rng* rng = nullptr;
    const AttentionObserver* observer = nullptr;
    const TraceSink* trace = nullptr;
    /// Test hook: collects the constant nodes created from cached context.
    std::vector<Var>* context_inputs = nullptr;

    Var bind(Parameter* p) const { return params(*p); }
    Var drop(const Var& x, double rate) const;
};

struct Linear {
    Parameter* weight = nullptr;  // [in, out]
    Parameter* bias = nullptr;    // [out] or null
};

enum class Init { fan_in_uniform, zeros };

Linear make_linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& init_rng,
                   bool with_bias = true, Init init = Init::fan_in_uniform);
Var apply(const ForwardContext& ctx, const Linear& layer, const Var& x);

struct LayerNormParams {
    Parameter* gain = nullptr;
    Parameter* bias = nullptr;
};
LayerNormParams make_layer_norm(ParameterSet& params, const std::string& name, std::size_t width);
Var apply(const ForwardContext& ctx, const LayerNormParams& norm, const Var& x);

/// relu(x W1 + b1) W2 + b2
struct FeedForward {
    Linear inner;
    Linear outer;
};
FeedForward make_feed_forward(ParameterSet& params, const std::string& name, std::size_t d_model, std::size_t d_ff,
                              Rng& init_rng);
Var apply(const ForwardContext& ctx, const FeedForward& ffn, const Var& x, double dropout_rate = 0.0);

struct AttentionParams {
    Linear query;
    Linear key;
    Linear value;
    Linear output;
    std::size_t heads = 1;
};
AttentionParams make_attention(ParameterSet& params, const std::string& name, std::size_t d_model, std::size_t heads,
                               Rng& init_rng);

struct AttentionOutput {
    Var output;   // [..., q_len, d_model]
    Var weights;  // [..., heads, q_len, kv_len]
};

/// Scaled dot-product attention with per-head projections and an output
/// projection. Inputs may carry matching leading batch axes. `keep_mask`
/// (1 keep / 0 drop) has shape [kv_len] or [q_len, kv_len].
AttentionOutput multi_head_attention(const ForwardContext& ctx, const AttentionParams& attn, const Var& query,
                                     const Var& keys, const Var& values, const Tensor* keep_mask,
                                     std::string_view site);

/// Row t, columns (2i, 2i+1) = sin/cos(t / 10000^(2i/d_model)).
Tensor positional_encoding(std::size_t max_len, std::size_t d_model);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) values.
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace hanmt
