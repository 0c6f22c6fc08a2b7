#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hanmt/tensor.hpp"

namespace hanmt {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode graph. Each op allocates a node holding its
/// forward value, its inputs and a closure that pushes the output gradient
/// back into the inputs. Graphs are per forward pass; there is no global tape.
struct Node {
    Tensor value;
    const Tensor* borrowed = nullptr;  // external storage (bound parameters)
    Tensor grad;                       // empty until something flows in
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backward_fn;

    const Tensor& val() const { return borrowed != nullptr ? *borrowed : value; }
    /// Zero-initialized on first use.
    Tensor& grad_buffer();
    const Tensor& input_value(std::size_t i) const { return inputs[i]->val(); }
    bool input_needs_grad(std::size_t i) const { return inputs[i]->requires_grad; }
    Tensor& input_grad(std::size_t i) { return inputs[i]->grad_buffer(); }
};

/// Handle to a graph node. Cheap to copy; copies alias the same node.
class Var {
   public:
    Var() = default;

    static Var constant(Tensor value);
    static Var leaf(Tensor value);
    /// References `external` without copying; it must outlive the graph.
    static Var bind(const Tensor& external, bool requires_grad);
    /// Output of an op. The backward closure is dropped when no input needs a gradient.
    static Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->val(); }
    const Shape& shape() const { return node_->val().shape(); }
    std::size_t dim(std::size_t axis) const { return node_->val().dim(axis); }
    std::size_t rank() const { return node_->val().rank(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient accumulated by the last backward(); zeros when none flowed here.
    Tensor grad() const;

    /// Reverse pass from a single-element output, seeding d(out)/d(out) = 1.
    void backward() const;

    Node* node() const { return node_.get(); }
    const NodePtr& node_ptr() const { return node_; }

   private:
    explicit Var(NodePtr node) : node_(std::move(node)) {}
    NodePtr node_;
};

}  // namespace hanmt
