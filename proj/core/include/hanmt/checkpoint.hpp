#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hanmt/config.hpp"
#include "hanmt/parameters.hpp"

namespace hanmt {

/// Adam moments by parameter name, in registration order.
struct OptimizerState {
    std::uint64_t step = 0;
    std::vector<std::string> names;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;

    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct NamedTensor {
    std::string name;
    Tensor value;
    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Everything a checkpoint file holds. See docs/checkpoint-format.md.
struct Checkpoint {
    ModelConfig config;
    KeyValues metadata;  // e.g. stage = 1
    std::vector<NamedTensor> parameters;
    std::optional<OptimizerState> optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Thrown for unreadable, truncated or incompatible checkpoint files.
class CheckpointError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Rounds every value to the nearest float32 so that checkpoints are exact.
void round_to_float(Tensor& t);
void round_to_float(ParameterSet& params);

std::string serialize_checkpoint(const ModelConfig& config, const ParameterSet& params,
                                 const OptimizerState* optimizer, const KeyValues& metadata);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const ModelConfig& config, const ParameterSet& params,
                     const OptimizerState* optimizer, const KeyValues& metadata);
Checkpoint load_checkpoint(const std::string& path);

/// Copies every tensor whose name exists in `params` (shapes must agree).
/// Returns the names in `params` that the checkpoint did not provide.
std::vector<std::string> assign_parameters(ParameterSet& params, const Checkpoint& ckpt);

}  // namespace hanmt
