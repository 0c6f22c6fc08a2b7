#include "hanmt/layers.hpp"

#include <cmath>

#include <fmt/format.h>

namespace hanmt {

Var ForwardContext::drop(const Var& x, double rate) const {
    if (!training || rate == 0.0) return x;
    if (rng == nullptr) throw ConfigError("training-mode dropout needs a random generator");
    return dropout(x, rate, training, *rng);
}

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data()) v = bound * (2.0 * uniform01(rng) - 1.0);
    return t;
}

Linear make_linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& init_rng,
                   bool with_bias, Init init) {
    Linear layer;
    Tensor w = init == Init::zeros ? Tensor({in, out}, 0.0) : fan_in_uniform({in, out}, in, init_rng);
    layer.weight = &params.add(name + ".w", std::move(w));
    if (with_bias) layer.bias = &params.add(name + ".b", Tensor({out}, 0.0));
    return layer;
}

Var apply(const ForwardContext& ctx, const Linear& layer, const Var& x) {
    if (layer.bias == nullptr) return affine(x, ctx.bind(layer.weight));
    return affine(x, ctx.bind(layer.weight), ctx.bind(layer.bias));
}

LayerNormParams make_layer_norm(ParameterSet& params, const std::string& name, std::size_t width) {
    return {&params.add(name + ".gain", Tensor({width}, 1.0)), &params.add(name + ".bias", Tensor({width}, 0.0))};
}

Var apply(const ForwardContext& ctx, const LayerNormParams& norm, const Var& x) {
    return layer_norm(x, ctx.bind(norm.gain), ctx.bind(norm.bias));
}

FeedForward make_feed_forward(ParameterSet& params, const std::string& name, std::size_t d_model, std::size_t d_ff,
                              Rng& init_rng) {
    return {make_linear(params, name + ".inner", d_model, d_ff, init_rng),
            make_linear(params, name + ".outer", d_ff, d_model, init_rng)};
}

Var apply(const ForwardContext& ctx, const FeedForward& ffn, const Var& x, double dropout_rate) {
    Var hidden = relu(apply(ctx, ffn.inner, x));
    hidden = ctx.drop(hidden, dropout_rate);
    return apply(ctx, ffn.outer, hidden);
}

AttentionParams make_attention(ParameterSet& params, const std::string& name, std::size_t d_model, std::size_t heads,
                               Rng& init_rng) {
    if (heads == 0 || d_model % heads != 0) {
        throw ConfigError(fmt::format("{}: {} heads do not divide d_model {}", name, heads, d_model));
    }
    AttentionParams attn;
    attn.query = make_linear(params, name + ".q", d_model, d_model, init_rng);
    attn.key = make_linear(params, name + ".k", d_model, d_model, init_rng);
    attn.value = make_linear(params, name + ".v", d_model, d_model, init_rng);
    attn.output = make_linear(params, name + ".o", d_model, d_model, init_rng);
    attn.heads = heads;
    return attn;
}

namespace {

// [..., len, d] -> [..., heads, len, d/heads]
Var split_heads(const Var& x, std::size_t heads) {
    const Shape& s = x.shape();
    const std::size_t rank = s.size();
    Shape split(s.begin(), s.end() - 1);
    split.push_back(heads);
    split.push_back(s.back() / heads);
    std::vector<std::size_t> axes(rank + 1);
    for (std::size_t i = 0; i + 2 < rank; ++i) axes[i] = i;
    axes[rank - 2] = rank - 1;  // heads
    axes[rank - 1] = rank - 2;  // len
    axes[rank] = rank;
    return permute(reshape(x, std::move(split)), axes);
}

// [..., heads, len, dh] -> [..., len, heads * dh]
Var merge_heads(const Var& x) {
    const Shape& s = x.shape();
    const std::size_t rank = s.size();
    std::vector<std::size_t> axes(rank);
    for (std::size_t i = 0; i + 3 < rank; ++i) axes[i] = i;
    axes[rank - 3] = rank - 2;
    axes[rank - 2] = rank - 3;
    axes[rank - 1] = rank - 1;
    Var moved = permute(x, axes);
    Shape merged(moved.shape().begin(), moved.shape().end() - 2);
    merged.push_back(s[rank - 3] * s[rank - 1]);
    return reshape(moved, std::move(merged));
}

}  // namespace

AttentionOutput multi_head_attention(const ForwardContext& ctx, const AttentionParams& attn, const Var& query,
                                     const Var& keys, const Var& values, const Tensor* keep_mask,
                                     std::string_view site) {
    if (query.rank() < 2 || keys.rank() != query.rank() || values.shape() != keys.shape() ||
        query.shape().back() != keys.shape().back()) {
        throw DimensionError(fmt::format("attention {}: query {} keys {} values {}", site, shape_str(query.shape()),
                                         shape_str(keys.shape()), shape_str(values.shape())));
    }
    const std::size_t d_model = query.shape().back();
    if (d_model % attn.heads != 0) {
        throw ConfigError(fmt::format("attention {}: {} heads do not divide {}", site, attn.heads, d_model));
    }
    const double scaling = 1.0 / std::sqrt(static_cast<double>(d_model / attn.heads));

    Var q = split_heads(apply(ctx, attn.query, query), attn.heads);
    Var k = split_heads(apply(ctx, attn.key, keys), attn.heads);
    Var v = split_heads(apply(ctx, attn.value, values), attn.heads);
    Var scores = scale(matmul(q, transpose(k)), scaling);
    Var weights = softmax(scores, scores.rank() - 1, keep_mask);
    if (ctx.observer != nullptr) (*ctx.observer)(site, weights.value());
    Var context = merge_heads(matmul(weights, v));
    return {apply(ctx, attn.output, context), weights};
}

Tensor positional_encoding(std::size_t max_len, std::size_t d_model) {
    if (d_model % 2 != 0) throw ConfigError("positional encoding needs an even width");
    Tensor pe({max_len, d_model});
    for (std::size_t t = 0; t < max_len; ++t) {
        for (std::size_t i = 0; i < d_model / 2; ++i) {
            const double angle =
                static_cast<double>(t) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
            pe[t * d_model + 2 * i] = std::sin(angle);
            pe[t * d_model + 2 * i + 1] = std::cos(angle);
        }
    }
    return pe;
}

}  // namespace hanmt
