#include "hanmt/model.hpp"

#include "hanmt/checkpoint.hpp"

#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace hanmt {

std::vector<int> truncate_tokens(std::span<const int> tokens, std::size_t max_len, const char* what) {
    if (tokens.size() <= max_len) return {tokens.begin(), tokens.end()};
    spdlog::warn("{} of {} tokens truncated to max_len {}", what, tokens.size(), max_len);
    return {tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(max_len)};
}

Model::Model(ModelConfig config, std::uint64_t init_seed)
    : config_(config), params_(std::make_unique<ParameterSet>()) {
    config_.validate();
    Rng rng(init_seed);
    const std::size_t d = config_.d_model;
    positions_ = positional_encoding(config_.max_len, d);

    src_embedding_ = &params_->add("enc.embedding", fan_in_uniform({config_.vocab_src, d}, d, rng));
    tgt_embedding_ = &params_->add("dec.embedding", fan_in_uniform({config_.vocab_tgt, d}, d, rng));
    for (std::size_t i = 0; i < config_.n_layers_enc; ++i) {
        const std::string name = fmt::format("enc.layers.{}", i);
        encoder_.push_back({make_attention(*params_, name + ".self_attn", d, config_.n_heads, rng),
                            make_layer_norm(*params_, name + ".self_norm", d),
                            make_feed_forward(*params_, name + ".ffn", d, config_.d_ff, rng),
                            make_layer_norm(*params_, name + ".ffn_norm", d)});
    }
    for (std::size_t i = 0; i < config_.n_layers_dec; ++i) {
        const std::string name = fmt::format("dec.layers.{}", i);
        decoder_.push_back({make_attention(*params_, name + ".self_attn", d, config_.n_heads, rng),
                            make_layer_norm(*params_, name + ".self_norm", d),
                            make_attention(*params_, name + ".cross_attn", d, config_.n_heads, rng),
                            make_layer_norm(*params_, name + ".cross_norm", d),
                            make_feed_forward(*params_, name + ".ffn", d, config_.d_ff, rng),
                            make_layer_norm(*params_, name + ".ffn_norm", d)});
    }
    output_ = make_linear(*params_, "dec.output", d, config_.vocab_tgt, rng);

    const std::size_t han_heads = config_.effective_han_heads();
    for (HanSite site : han_sites(config_.han_mode)) {
        if (site == HanSite::encoder) {
            encoder_han_ = make_han_block(*params_, "han.enc", d, config_.d_ff, han_heads, config_.han_residual,
                                          config_.dropout, rng);
        } else {
            decoder_site_ = site;
            decoder_han_ = make_han_block(*params_, "han.dec", d, config_.d_ff, han_heads, config_.han_residual,
                                          config_.dropout, rng);
        }
    }
    // float-representable values make checkpoints exact
    round_to_float(*params_);
}

std::vector<Parameter*> Model::han_parameters() {
    std::vector<Parameter*> out;
    for (auto& p : *params_) {
        if (p->name.starts_with("han.")) out.push_back(p.get());
    }
    return out;
}

const HanBlock* Model::block_for(HanSite site) const {
    if (site == HanSite::encoder) return encoder_han_ ? &*encoder_han_ : nullptr;
    if (decoder_han_ && decoder_site_ == site) return &*decoder_han_;
    return nullptr;
}

Var Model::embed(const ForwardContext& ctx, Parameter* table, std::span<const int> tokens) const {
    const std::size_t len = tokens.size();
    Var x = scale(gather_rows(ctx.bind(table), tokens), std::sqrt(static_cast<double>(config_.d_model)));
    x = add(x, Var::constant(positions_.rows(0, len)));
    return ctx.drop(x, config_.dropout);
}

Encoded Model::encode(const ForwardContext& ctx, std::span<const int> source, const ContextCache& cache) const {
    std::vector<int> tokens = truncate_tokens(source, config_.max_len, "source sentence");
    if (tokens.empty()) throw std::invalid_argument("cannot encode an empty sentence");
    const std::size_t len = tokens.size();
    Tensor keep({len});
    for (std::size_t i = 0; i < len; ++i) keep[i] = tokens[i] == kPadId ? 0.0 : 1.0;

    Var x = embed(ctx, src_embedding_, tokens);
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
        const EncoderLayer& layer = encoder_[i];
        const std::string site = fmt::format("enc.layers.{}.self_attn", i);
        Var attended = multi_head_attention(ctx, layer.self_attn, x, x, x, &keep, site).output;
        x = apply(ctx, layer.self_norm, add(x, ctx.drop(attended, config_.dropout)));
        Var ff = apply(ctx, layer.ffn, x, config_.dropout);
        x = apply(ctx, layer.ffn_norm, add(x, ctx.drop(ff, config_.dropout)));
    }
    Encoded out{x, x, std::move(keep), std::move(tokens)};
    if (encoder_han_) out.memory = hanmt::han_apply(ctx, HanSite::encoder, x, cache, *encoder_han_);
    return out;
}

Decoded Model::decode(const ForwardContext& ctx, std::span<const int> target_in, const Encoded& enc,
                      const ContextCache& cache) const {
    std::vector<int> tokens = truncate_tokens(target_in, config_.max_len, "target sentence");
    if (tokens.empty()) throw std::invalid_argument("cannot decode an empty prefix");
    const std::size_t len = tokens.size();
    Tensor causal({len, len}, 0.0);
    for (std::size_t q = 0; q < len; ++q) {
        for (std::size_t k = 0; k <= q; ++k) causal[q * len + k] = tokens[k] == kPadId && k != q ? 0.0 : 1.0;
    }

    Var x = embed(ctx, tgt_embedding_, tokens);
    Var alignment;
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
        const DecoderLayer& layer = decoder_[i];
        Var self = multi_head_attention(ctx, layer.self_attn, x, x, x, &causal, fmt::format("dec.layers.{}.self_attn", i))
                       .output;
        x = apply(ctx, layer.self_norm, add(x, ctx.drop(self, config_.dropout)));
        Var cross = multi_head_attention(ctx, layer.cross_attn, x, enc.memory, enc.memory, &enc.keep_mask,
                                         fmt::format("dec.layers.{}.cross_attn", i))
                        .output;
        alignment = cross;
        x = apply(ctx, layer.cross_norm, add(x, ctx.drop(cross, config_.dropout)));
        Var ff = apply(ctx, layer.ffn, x, config_.dropout);
        x = apply(ctx, layer.ffn_norm, add(x, ctx.drop(ff, config_.dropout)));
    }
    Decoded out{x, alignment, x, std::move(tokens)};
    if (decoder_han_) out.final = hanmt::han_apply(ctx, decoder_site_, x, cache, *decoder_han_);
    return out;
}

Var Model::classify(const ForwardContext& ctx, const Var& h) const { return apply(ctx, output_, h); }

Var Model::han_apply(const ForwardContext& ctx, HanSite site, const Var& h, const ContextCache& cache) const {
    const HanBlock* block = block_for(site);
    if (block == nullptr) {
        throw ConfigError(
            fmt::format("han_mode {} has no block at site {}", to_string(config_.han_mode), to_string(site)));
    }
    return hanmt::han_apply(ctx, site, h, cache, *block);
}

void Model::push_context(ContextCache& cache, const Encoded& enc, const Decoded& dec) const {
    if (cache.tracks_target()) {
        cache.push(enc.snapshot(), dec.snapshot());
    } else {
        cache.push(enc.snapshot());
    }
}

void Model::set_gate_override(std::optional<double> lambda) {
    if (encoder_han_) encoder_han_->gate_override = lambda;
    if (decoder_han_) decoder_han_->gate_override = lambda;
}

void Model::copy_transformer_weights(const ParameterSet& other) {
    for (auto& p : *params_) {
        if (p->name.starts_with("han.")) continue;
        const Parameter* src = other.find(p->name);
        if (src == nullptr || src->value.shape() != p->value.shape()) {
            throw ConfigError(fmt::format("source model lacks a compatible '{}'", p->name));
        }
        p->value = src->value;
    }
}

}  // namespace hanmt
