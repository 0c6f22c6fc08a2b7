#include "hanmt/parameters.hpp"

#include <fmt/format.h>

namespace hanmt {

Parameter& ParameterSet::add(std::string name, Tensor init) {
    if (index_.contains(name)) throw ConfigError(fmt::format("duplicate parameter name '{}'", name));
    index_.emplace(name, params_.size());
    Tensor grad(init.shape(), 0.0);
    params_.push_back(std::make_unique<Parameter>(Parameter{std::move(name), std::move(init), std::move(grad)}));
    return *params_.back();
}

Parameter* ParameterSet::find(std::string_view name) {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParameterSet::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParameterSet::at(std::string_view name) {
    Parameter* p = find(name);
    if (p == nullptr) throw std::out_of_range(fmt::format("no parameter named '{}'", name));
    return *p;
}

const Parameter& ParameterSet::at(std::string_view name) const {
    const Parameter* p = find(name);
    if (p == nullptr) throw std::out_of_range(fmt::format("no parameter named '{}'", name));
    return *p;
}

std::size_t ParameterSet::element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p->grad.fill(0.0);
}

Var ParamBinding::operator()(Parameter& p) {
    auto it = slot_.find(&p);
    if (it != slot_.end()) return bound_[it->second].second;
    Var v = Var::bind(p.value, track_grads_);
    slot_.emplace(&p, bound_.size());
    bound_.emplace_back(&p, v);
    return v;
}

void ParamBinding::accumulate_grads(double weight) {
    for (auto& [param, var] : bound_) {
        if (!var.has_grad()) continue;
        const Tensor& g = var.node()->grad;
        for (std::size_t i = 0; i < g.size(); ++i) param->grad[i] += weight * g[i];
    }
}

}  // namespace hanmt
