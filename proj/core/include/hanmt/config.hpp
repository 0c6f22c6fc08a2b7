#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>

namespace hanmt {

// Reserved token ids shared by both vocabularies.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;

/// Where the hierarchical context attention is attached.
enum class HanMode {
    none,               // sentence-level baseline
    encoder,            // values: previous source encoder states, replaces encoder output
    decoder,            // values: previous target decoder states
    decoder_source,     // values: previous source encoder states, at the decoder
    decoder_alignment,  // values: previous encoder-decoder attention outputs
    joint,              // encoder + decoder
};

std::string_view to_string(HanMode mode);
HanMode parse_han_mode(std::string_view text);

bool uses_encoder_han(HanMode mode);
bool uses_decoder_han(HanMode mode);
/// True when the mode needs previous target-side states in the context cache.
bool uses_target_context(HanMode mode);

using KeyValues = std::map<std::string, std::string, std::less<>>;

struct ModelConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers_enc = 2;
    std::size_t n_layers_dec = 2;
    std::size_t d_ff = 128;
    double dropout = 0.1;
    std::size_t vocab_src = 0;
    std::size_t vocab_tgt = 0;
    std::size_t max_len = 64;
    std::size_t k = 3;
    HanMode han_mode = HanMode::none;
    std::size_t han_heads = 0;  // 0: same as n_heads
    bool han_residual = false;

    std::size_t effective_han_heads() const { return han_heads == 0 ? n_heads : han_heads; }
    /// Throws ConfigError on any violated invariant.
    void validate() const;

    KeyValues to_key_values() const;
    /// Reads the keys it knows; unknown keys are ignored so one file can hold
    /// model and training settings together.
    static ModelConfig from_key_values(const KeyValues& kv, ModelConfig base);
    static ModelConfig from_key_values(const KeyValues& kv);
    /// True when the transformer part of both configs has identical shapes.
    bool transformer_compatible(const ModelConfig& other) const;
};

/// Typed readers for config values; ConfigError names the key on failure.
std::size_t parse_size(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

/// `key = value` lines; '#' starts a comment. Throws on malformed lines.
KeyValues parse_key_values(std::string_view text);
KeyValues read_key_value_file(const std::string& path);
std::string format_key_values(const KeyValues& kv);

}  // namespace hanmt
