#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hanmt/config.hpp"
#include "hanmt/han.hpp"
#include "hanmt/layers.hpp"

namespace hanmt {

/// Encoder output for one sentence.
struct Encoded {
    Var states;      // last layer, before context [len, d]
    Var memory;      // what the decoder attends to (states, or the HAN output)
    Tensor keep_mask;
    std::vector<int> tokens;

    EncoderStates snapshot() const { return {states.value(), keep_mask, tokens}; }
};

/// Teacher-forced decoder output for one sentence.
struct Decoded {
    Var states;     // last layer, before context [len, d]
    Var alignment;  // last layer encoder-decoder attention output [len, d]
    Var final;      // h~ fed to the classifier
    std::vector<int> tokens;

    DecoderStates snapshot() const { return {states.value(), alignment.value(), tokens}; }
};

/// Post-norm transformer encoder-decoder with optional hierarchical context
/// attention at the top of the encoder and/or decoder.
class Model {
   public:
    Model(ModelConfig config, std::uint64_t init_seed);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelConfig& config() const { return config_; }
    ParameterSet& parameters() { return *params_; }
    const ParameterSet& parameters() const { return *params_; }
    /// Parameters owned by HAN blocks ("han." prefix).
    std::vector<Parameter*> han_parameters();

    ContextCache make_cache() const { return ContextCache(config_.k, uses_target_context(config_.han_mode)); }

    /// Encoder stack; applies the encoder-side HAN when the mode has one.
    /// Sentences longer than max_len are truncated with a warning.
    Encoded encode(const ForwardContext& ctx, std::span<const int> source, const ContextCache& cache) const;
    /// Teacher-forced decoder over `target_in` (bos + tokens), causal.
    Decoded decode(const ForwardContext& ctx, std::span<const int> target_in, const Encoded& enc,
                   const ContextCache& cache) const;
    /// Vocabulary logits [len, vocab_tgt].
    Var classify(const ForwardContext& ctx, const Var& h) const;
    /// HAN for one site; ConfigError when the mode has no block there.
    Var han_apply(const ForwardContext& ctx, HanSite site, const Var& h, const ContextCache& cache) const;

    /// Pushes one finished sentence into the cache with whatever the mode needs.
    void push_context(ContextCache& cache, const Encoded& enc, const Decoded& dec) const;

    /// Test hook: pin every gate to a constant (1.0 reproduces the baseline).
    void set_gate_override(std::optional<double> lambda);

    /// Copies transformer weights from `other`; HAN parameters stay as they are.
    void copy_transformer_weights(const ParameterSet& other);

   private:
    const HanBlock* block_for(HanSite site) const;
    Var embed(const ForwardContext& ctx, Parameter* table, std::span<const int> tokens) const;

    struct EncoderLayer {
        AttentionParams self_attn;
        LayerNormParams self_norm;
        FeedForward ffn;
        LayerNormParams ffn_norm;
    };
    struct DecoderLayer {
        AttentionParams self_attn;
        LayerNormParams self_norm;
        AttentionParams cross_attn;
        LayerNormParams cross_norm;
        FeedForward ffn;
        LayerNormParams ffn_norm;
    };

    ModelConfig config_;
    std::unique_ptr<ParameterSet> params_;
    Tensor positions_;
    Parameter* src_embedding_ = nullptr;
    Parameter* tgt_embedding_ = nullptr;
    std::vector<EncoderLayer> encoder_;
    std::vector<DecoderLayer> decoder_;
    Linear output_;
    std::optional<HanBlock> encoder_han_;
    std::optional<HanBlock> decoder_han_;
    HanSite decoder_site_ = HanSite::decoder_target;
};

/// Ids longer than max_len are cut, logging one warning.
std::vector<int> truncate_tokens(std::span<const int> tokens, std::size_t max_len, const char* what);

}  // namespace hanmt
