#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>

#include "hanmt/autodiff.hpp"

namespace hanmt {

using Rng = std::mt19937_64;

/// Uniform in [0, 1) from the top 53 bits; identical on every standard library.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Elementwise binary ops. `b` may be broadcast when its shape is a suffix of
// `a`'s shape (a bias row, a scalar, a per-head mask).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// scale * x + shift
Var affine_scalar(const Var& x, double scale, double shift = 0.0);
inline Var scale(const Var& x, double s) { return affine_scalar(x, s, 0.0); }

/// Batched matrix product over the last two axes; leading axes broadcast.
Var matmul(const Var& a, const Var& b);
/// x W (+ b). x may be a vector, a matrix or a batch of matrices.
Var affine(const Var& x, const Var& w, const std::optional<Var>& b = std::nullopt);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, std::span<const std::size_t> axes);
Var permute(const Var& x, std::initializer_list<std::size_t> axes);
/// Swap the last two axes.
Var transpose(const Var& x);
/// Stack equally shaped tensors along a new axis.
Var stack(std::span<const Var> parts, std::size_t axis);
/// Rows [begin, end) along axis 0.
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
/// table[ids[i], :] for every id; the embedding lookup.
Var gather_rows(const Var& table, std::span<const int> ids);

/// Softmax along `axis` with max subtraction. An optional keep-mask (1 keep,
/// 0 drop) whose shape is a suffix of x's shape is applied along the last
/// axis; dropped entries get exactly zero weight. Throws when an entire row
/// is dropped or the axis extent is zero.
Var softmax(const Var& x, std::size_t axis, const Tensor* keep_mask = nullptr);

/// Layer normalization over the last axis, epsilon 1e-6, population variance.
Var layer_norm(const Var& x, const Var& gain, const Var& bias);
inline constexpr double kLayerNormEpsilon = 1e-6;

Var relu(const Var& x);
Var sigmoid(const Var& x);

/// Inverted dropout. Identity when !training or rate == 0. Throws ConfigError
/// when rate is outside [0, 1).
Var dropout(const Var& x, double rate, bool training, Rng& rng);

/// Mean over non-pad positions of KL(q || softmax(logits)) where q puts
/// 1 - smoothing on the target and smoothing / (V - 1) on every other class.
Var cross_entropy_smoothed(const Var& logits, std::span<const int> targets, double smoothing, int pad_id);

Var sum(const Var& x);
Var mean(const Var& x);

}  // namespace hanmt
