#include "hanmt/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace hanmt {
namespace {

double checked_value(const Var& out) {
    if (out.value().size() != 1) throw DimensionError("grad_check: function must return a scalar");
    const double v = out.value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
}

void record(GradCheckResult& result, std::size_t index, double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
    const double err = std::abs(analytic - numeric) / denom;
    if (err > result.max_rel_error || result.checked == 0) {
        result.max_rel_error = err;
        result.worst_index = index;
        result.analytic = analytic;
        result.numeric = numeric;
    }
    ++result.checked;
}

}  // namespace

GradCheckResult grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, double h) {
    Var input = Var::leaf(x);
    Var out = f(input);
    checked_value(out);
    out.backward();
    const Tensor analytic = input.grad();
    if (!analytic.all_finite()) throw NumericError("grad_check: non-finite analytic gradient");

    GradCheckResult result;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = checked_value(f(Var::constant(probe)));
        probe[i] = orig - h;
        const double down = checked_value(f(Var::constant(probe)));
        probe[i] = orig;
        record(result, i, analytic[i], (up - down) / (2.0 * h));
    }
    return result;
}

GradCheckResult grad_check_parameters(const std::function<Var(ParamBinding&)>& loss, std::span<Parameter* const> params,
                                      double h) {
    for (Parameter* p : params) p->grad.fill(0.0);
    {
        ParamBinding binding(true);
        Var out = loss(binding);
        checked_value(out);
        out.backward();
        binding.accumulate_grads();
    }
    GradCheckResult result;
    std::size_t offset = 0;
    auto evaluate = [&]() {
        ParamBinding binding(false);
        return checked_value(loss(binding));
    };
    for (Parameter* p : params) {
        if (!p->grad.all_finite()) throw NumericError(fmt::format("grad_check: non-finite gradient for {}", p->name));
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double orig = p->value[i];
            p->value[i] = orig + h;
            const double up = evaluate();
            p->value[i] = orig - h;
            const double down = evaluate();
            p->value[i] = orig;
            record(result, offset + i, p->grad[i], (up - down) / (2.0 * h));
        }
        offset += p->value.size();
    }
    return result;
}

}  // namespace hanmt
