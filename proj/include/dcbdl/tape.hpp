#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "dcbdl/tensor.hpp"

namespace dcbdl {

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Record of primitive operations in creation order. Creation order is a
// topological order, so the reverse sweep visits consumers before producers.
template <class T>
class Tape {
 public:
  Var leaf(Tensor<T> value, bool requires_grad = false) {
    value.require_finite("leaf");
    return push(std::move(value), requires_grad, nullptr);
  }

  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Registers a computed node. `backprop` reads this node's gradient and
  // accumulates into its parents; it may be empty when no parent needs one.
  Var emit(Tensor<T> value, bool requires_grad, std::function<void(Tape&)> backprop,
           const char* what) {
    value.require_finite(what);
    return push(std::move(value), requires_grad, requires_grad ? std::move(backprop) : nullptr);
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of the last backward() target w.r.t. v. Zero tensor if v never
  // received one.
  const Tensor<T>& grad(Var v) {
    auto& n = node(v);
    if (!n.grad_ready) {
      n.grad = Tensor<T>::zeros(n.value.shape);
      n.grad_ready = true;
    }
    return n.grad;
  }

  // Accumulation buffer used by backprop closures.
  Tensor<T>& grad_accum(Var v) {
    auto& n = node(v);
    if (!n.grad_ready) {
      n.grad = Tensor<T>::zeros(n.value.shape);
      n.grad_ready = true;
    }
    return n.grad;
  }

  void backward(Var loss) {
    auto& ln = node(loss);
    if (ln.value.numel() != 1)
      throw ContractViolation("backward requires a scalar loss, got shape " +
                              shape_str(ln.value.shape));
    for (auto& n : nodes_) {
      n.grad_ready = false;
      n.grad = Tensor<T>();
    }
    grad_accum(loss)[0] = T(1);
    for (std::int32_t i = loss.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.grad_ready && n.backprop) n.backprop(*this);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::function<void(Tape&)> backprop;
  };

  Var push(Tensor<T> value, bool requires_grad, std::function<void(Tape&)> backprop) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), requires_grad, false, std::move(backprop)});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

  std::vector<Node> nodes_;
};

}  // namespace dcbdl
