#include "hanmt/autodiff.hpp"

#include <unordered_set>

#include <fmt/format.h>

namespace hanmt {

Tensor& Node::grad_buffer() {
    if (grad.empty() && val().size() != 0) grad = Tensor(val().shape(), 0.0);
    return grad;
}

Var Var::constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var Var::leaf(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
}

Var Var::bind(const Tensor& external, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->borrowed = &external;
    node->requires_grad = requires_grad;
    return Var(std::move(node));
}

Var Var::make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    for (const Var& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
    if (node->requires_grad) {
        node->inputs.reserve(inputs.size());
        for (Var& in : inputs) node->inputs.push_back(std::move(in.node_));
        node->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(node));
}

Tensor Var::grad() const {
    if (node_->grad.empty()) return Tensor(node_->val().shape(), 0.0);
    return node_->grad;
}

void Var::backward() const {
    if (node_->val().size() != 1) {
        throw DimensionError(fmt::format("backward() needs a single-element output, got {}", shape_str(shape())));
    }
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; reversed it is a valid reverse-topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

}  // namespace hanmt
