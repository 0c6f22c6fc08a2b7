#pragma once

#include <functional>
#include <span>

#include "hanmt/parameters.hpp"

namespace hanmt {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;  // flat index across all checked values
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

inline constexpr double kGradCheckStep = 1e-5;
/// Below this magnitude a gradient counts as zero; central differences carry
/// roughly 1e-11 of rounding noise at the default step.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares the reverse-mode gradient of scalar f at x against central
/// differences. Per-element error is |a-n| / max(|a|, |n|, kGradCheckFloor).
/// Throws NumericError if any evaluation is non-finite.
GradCheckResult grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, double h = kGradCheckStep);

/// Same check over every element of `params`, perturbing them in place.
/// `loss` must build a fresh graph through the supplied binding.
GradCheckResult grad_check_parameters(const std::function<Var(ParamBinding&)>& loss, std::span<Parameter* const> params,
                                      double h = kGradCheckStep);

}  // namespace hanmt
