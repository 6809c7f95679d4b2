#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "graspvq/tensor.hpp"

namespace graspvq {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into this node
  bool requires_grad = false;
  bool retain_grad = false;
  const char* kind = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  void accumulate(std::span<const T> g);
  /// Gradient storage of this node, allocated as zeros on first use.
  Tensor<T>& grad_buffer();
};

/// Handle onto a node of the computation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// Graph leaf, e.g. an input or a trainable parameter.
  static Var leaf(Tensor<T> value, bool requires_grad = false);

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  /// Accumulated gradient; zeros when nothing reached this node.
  Tensor<T> grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  /// Keep this (non-leaf) node's gradient after backward() for inspection.
  void retain_grad() { node_->retain_grad = true; }
  const char* kind() const { return node_->kind; }
  bool valid() const { return static_cast<bool>(node_); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds an op node. Inputs are retained and the backward closure kept only
/// when at least one input requires a gradient.
template <typename T>
Var<T> make_op(const char* kind, Tensor<T> value, std::vector<Var<T>> inputs,
               std::function<void(Node<T>&)> backward);

/// Propagates d(loss)/d(.) to every requires_grad node reachable from loss.
/// Leaf gradients accumulate across calls until zero_grad().
template <typename T>
void backward(const Var<T>& loss);

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Var<float>;
extern template class Var<double>;

}  // namespace graspvq
