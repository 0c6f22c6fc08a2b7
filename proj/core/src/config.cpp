#include "hanmt/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "hanmt/tensor.hpp"

namespace hanmt {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError(fmt::format("'{}' expects a non-negative integer, got '{}'", key, value));
    }
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("'{}' expects a number, got '{}'", key, value));
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(fmt::format("'{}' expects true/false, got '{}'", key, value));
}

std::string_view to_string(HanMode mode) {
    switch (mode) {
        case HanMode::none: return "none";
        case HanMode::encoder: return "encoder";
        case HanMode::decoder: return "decoder";
        case HanMode::decoder_source: return "decoder_source";
        case HanMode::decoder_alignment: return "decoder_alignment";
        case HanMode::joint: return "joint";
    }
    return "none";
}

HanMode parse_han_mode(std::string_view text) {
    for (HanMode m : {HanMode::none, HanMode::encoder, HanMode::decoder, HanMode::decoder_source,
                      HanMode::decoder_alignment, HanMode::joint}) {
        if (to_string(m) == text) return m;
    }
    throw ConfigError(fmt::format("unknown han_mode '{}'", text));
}

bool uses_encoder_han(HanMode mode) { return mode == HanMode::encoder || mode == HanMode::joint; }

bool uses_decoder_han(HanMode mode) {
    return mode == HanMode::decoder || mode == HanMode::decoder_source || mode == HanMode::decoder_alignment ||
           mode == HanMode::joint;
}

bool uses_target_context(HanMode mode) {
    return mode == HanMode::decoder || mode == HanMode::decoder_alignment || mode == HanMode::joint;
}

void ModelConfig::validate() const {
    if (d_model == 0 || n_heads == 0) throw ConfigError("d_model and n_heads must be positive");
    if (d_model % n_heads != 0) throw ConfigError(fmt::format("d_model {} not divisible by n_heads {}", d_model, n_heads));
    if (d_model % effective_han_heads() != 0) {
        throw ConfigError(fmt::format("d_model {} not divisible by han_heads {}", d_model, effective_han_heads()));
    }
    if (d_model % 2 != 0) throw ConfigError("d_model must be even for sinusoidal positions");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError(fmt::format("dropout {} outside [0, 1)", dropout));
    if (vocab_src < 5 || vocab_tgt < 5) throw ConfigError("vocabularies need the four specials plus at least one token");
    if (max_len == 0) throw ConfigError("max_len must be positive");
    if (n_layers_enc == 0 || n_layers_dec == 0) throw ConfigError("at least one encoder and one decoder layer");
    if (d_ff == 0) throw ConfigError("d_ff must be positive");
}

KeyValues ModelConfig::to_key_values() const {
    KeyValues kv;
    kv["d_model"] = std::to_string(d_model);
    kv["n_heads"] = std::to_string(n_heads);
    kv["n_layers_enc"] = std::to_string(n_layers_enc);
    kv["n_layers_dec"] = std::to_string(n_layers_dec);
    kv["d_ff"] = std::to_string(d_ff);
    kv["dropout"] = fmt::format("{}", dropout);
    kv["vocab_src"] = std::to_string(vocab_src);
    kv["vocab_tgt"] = std::to_string(vocab_tgt);
    kv["max_len"] = std::to_string(max_len);
    kv["k"] = std::to_string(k);
    kv["han_mode"] = std::string(to_string(han_mode));
    kv["han_heads"] = std::to_string(han_heads);
    kv["han_residual"] = han_residual ? "true" : "false";
    return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv, ModelConfig c) {
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto* v = get("d_model")) c.d_model = parse_size("d_model", *v);
    if (auto* v = get("n_heads")) c.n_heads = parse_size("n_heads", *v);
    if (auto* v = get("n_layers_enc")) c.n_layers_enc = parse_size("n_layers_enc", *v);
    if (auto* v = get("n_layers_dec")) c.n_layers_dec = parse_size("n_layers_dec", *v);
    if (auto* v = get("d_ff")) c.d_ff = parse_size("d_ff", *v);
    if (auto* v = get("dropout")) c.dropout = parse_double("dropout", *v);
    if (auto* v = get("vocab_src")) c.vocab_src = parse_size("vocab_src", *v);
    if (auto* v = get("vocab_tgt")) c.vocab_tgt = parse_size("vocab_tgt", *v);
    if (auto* v = get("max_len")) c.max_len = parse_size("max_len", *v);
    if (auto* v = get("k")) c.k = parse_size("k", *v);
    if (auto* v = get("han_mode")) c.han_mode = parse_han_mode(*v);
    if (auto* v = get("han_heads")) c.han_heads = parse_size("han_heads", *v);
    if (auto* v = get("han_residual")) c.han_residual = parse_bool("han_residual", *v);
    return c;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, ModelConfig{}); }

bool ModelConfig::transformer_compatible(const ModelConfig& o) const {
    return d_model == o.d_model && n_heads == o.n_heads && n_layers_enc == o.n_layers_enc &&
           n_layers_dec == o.n_layers_dec && d_ff == o.d_ff && vocab_src == o.vocab_src && vocab_tgt == o.vocab_tgt;
}

KeyValues parse_key_values(std::string_view text) {
    KeyValues kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(fmt::format("line {}: expected key = value", line_no));
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError(fmt::format("line {}: empty key", line_no));
        kv[std::move(key)] = std::move(value);
    }
    return kv;
}

KeyValues read_key_value_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open config file '{}'", path));
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_key_values(buf.str());
}

std::string format_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += fmt::format("{} = {}\n", k, v);
    return out;
}

}  // namespace hanmt
