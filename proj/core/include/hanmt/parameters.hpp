#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hanmt/autodiff.hpp"

namespace hanmt {

/// A trainable tensor with a unique dotted name such as "han.enc.gate.w_h".
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Owns the parameters of a model in registration order. Addresses are
/// stable for the lifetime of the set.
class ParameterSet {
   public:
    Parameter& add(std::string name, Tensor init);
    Parameter* find(std::string_view name);
    const Parameter* find(std::string_view name) const;
    Parameter& at(std::string_view name);
    const Parameter& at(std::string_view name) const;

    std::size_t size() const { return params_.size(); }
    std::size_t element_count() const;
    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.cbegin(); }
    auto end() const { return params_.cend(); }

   private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Binds parameters into one forward graph. Each parameter becomes a single
/// leaf per graph; accumulate_grads() folds the leaf gradients back into
/// Parameter::grad once backward() has run.
class ParamBinding {
   public:
    explicit ParamBinding(bool track_grads = true) : track_grads_(track_grads) {}

    Var operator()(Parameter& p);
    void accumulate_grads(double weight = 1.0);
    bool tracking() const { return track_grads_; }

   private:
    bool track_grads_;
    std::vector<std::pair<Parameter*, Var>> bound_;
    std::unordered_map<const Parameter*, std::size_t> slot_;
};

}  // namespace hanmt
