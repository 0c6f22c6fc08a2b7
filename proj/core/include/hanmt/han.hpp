#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "hanmt/config.hpp"
#include "hanmt/layers.hpp"

namespace hanmt {

/// Last encoder layer outputs of one source sentence, before any context is mixed in.
struct EncoderStates {
    Tensor states;            // [len, d_model]
    Tensor keep_mask;         // [len], 1 for real tokens, 0 for padding
    std::vector<int> tokens;  // ids the rows were computed from
};

/// Last decoder layer outputs of one target sentence plus the matching
/// encoder-decoder attention outputs (the alignment vectors).
struct DecoderStates {
    Tensor states;            // [len, d_model]
    Tensor alignment;         // [len, d_model]
    std::vector<int> tokens;  // decoder input ids (bos + target)
};

/// Rolling window of the previous k sentences of one document. Entries are
/// stored as plain tensors, so a forward pass can only see them as constants.
class ContextCache {
   public:
    ContextCache(std::size_t capacity, bool track_target);

    /// Appends a sentence and evicts the oldest beyond capacity. `dec` must be
    /// present exactly when the cache tracks target-side context.
    void push(EncoderStates enc, std::optional<DecoderStates> dec = std::nullopt);
    void reset();

    std::size_t capacity() const { return capacity_; }
    bool tracks_target() const { return track_target_; }
    std::size_t size() const { return source_.size(); }
    bool empty() const { return source_.empty(); }
    const std::deque<EncoderStates>& source() const { return source_; }
    const std::deque<DecoderStates>& target() const { return target_; }

   private:
    std::size_t capacity_;
    bool track_target_;
    std::deque<EncoderStates> source_;
    std::deque<DecoderStates> target_;
};

enum class HanSite { encoder, decoder_target, decoder_source, decoder_alignment };

std::string_view to_string(HanSite site);
HanSite parse_han_site(std::string_view text);
/// The sites a mode attaches a block to, encoder side first.
std::vector<HanSite> han_sites(HanMode mode);

/// Parameters of one hierarchical context attention block.
struct HanBlock {
    Linear word_query;      // f_w
    Linear sentence_query;  // f_s
    AttentionParams word_attn;
    AttentionParams sentence_attn;
    FeedForward ffn;
    LayerNormParams word_norm;
    LayerNormParams sentence_norm;
    LayerNormParams ffn_norm;
    Parameter* gate_h = nullptr;  // W_h [d, d]
    Parameter* gate_d = nullptr;  // W_d [d, d]
    bool residual = false;
    double dropout = 0.0;
    /// Test hook: when set, the gate is this constant instead of sigmoid(...).
    std::optional<double> gate_override;
};

HanBlock make_han_block(ParameterSet& params, const std::string& name, std::size_t d_model, std::size_t d_ff,
                        std::size_t heads, bool residual, double dropout, Rng& init_rng);

/// Attention weights of the hierarchy for one query position.
struct AttentionTrace {
    HanSite site = HanSite::encoder;
    std::size_t position = 0;
    Tensor sentence_weights;                       // [heads, k_eff]
    std::vector<Tensor> word_weights;              // per context sentence, [heads, len_j]
    std::vector<std::vector<int>> context_tokens;  // per context sentence
};

struct WordSummary {
    Var summary;  // [n, d]
    Var weights;  // [heads, n, len_j]
};

/// s_j for every query row: f_w, attention over one context sentence, norm.
/// `h` is [n, d] or [d]; the context is [len_j, d] and must be non-empty.
WordSummary word_level_summary(const ForwardContext& ctx, const HanBlock& block, const Var& h, const Var& context,
                               const Tensor* keep_mask = nullptr);

struct SentenceSummary {
    Var context;  // d_t, [n, d]
    Var weights;  // [n, heads, 1, k_eff]
};

/// d_t for every query row from its k_eff sentence summaries [n, k_eff, d]
/// (or [k_eff, d] for a single query).
SentenceSummary sentence_level_summary(const ForwardContext& ctx, const HanBlock& block, const Var& h,
                                       const Var& summaries);

struct GateOutput {
    Var blended;  // h~ = lambda * h + (1 - lambda) * d
    Var lambda;
};

GateOutput context_gate(const ForwardContext& ctx, const HanBlock& block, const Var& h, const Var& d);

/// Context-aware replacement for a batch of hidden states [len, d]. Returns
/// `h` itself when the cache holds nothing for this site.
Var han_apply(const ForwardContext& ctx, HanSite site, const Var& h, const ContextCache& cache,
              const HanBlock& block);

}  // namespace hanmt
