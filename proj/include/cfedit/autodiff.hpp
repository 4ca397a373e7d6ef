// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cfedit/tensor.hpp"

namespace cfedit {

/// Trainable tensor with its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<Scalar> v) : name(std::move(n)), value(std::move(v)), grad(Tensor<Scalar>::zeros_like(value)) {}

  void zero_grad() { grad = Tensor<Scalar>::zeros_like(value); }
};

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Tensor<Scalar>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  bool valid() const noexcept { return tape != nullptr && id >= 0; }
};

/// Linear record of forward operations. Node ids are assigned in creation
/// order, so inputs always precede the ops that consume them and backward is a
/// single reverse sweep.
template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    Parameter<Scalar>* param = nullptr;
    std::vector<int> inputs;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When disabled no backward closures are kept (inference mode).
  void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var<Scalar> constant(Tensor<Scalar> value) {
    Node node;
    node.value = std::move(value);
    return push(std::move(node));
  }

  Var<Scalar> parameter(Parameter<Scalar>& p) {
    Node node;
    node.value = p.value;
    node.requires_grad = grad_enabled_;
    node.param = &p;
    return push(std::move(node));
  }

  /// Records an op output. `fn(tape, self)` must push gradient from
  /// grad(self) into the grads of `inputs`.
  Var<Scalar> record(Tensor<Scalar> value, std::vector<int> inputs, BackwardFn fn) {
    // A single vectorized sum is non-finite whenever any element is.
    if (!std::isfinite(static_cast<double>(value.array().sum())) && !value.all_finite()) {
      throw NumericError("non-finite value produced by op " + std::to_string(nodes_.size()) + " with shape " +
                         shape_str(value.shape()));
    }
    Node node;
    node.value = std::move(value);
    if (grad_enabled_) {
      for (int in : inputs) node.requires_grad = node.requires_grad || nodes_.at(static_cast<std::size_t>(in)).requires_grad;
    }
    if (node.requires_grad) {
      node.inputs = std::move(inputs);
      node.backward = std::move(fn);
    }
    return push(std::move(node));
  }

  const Tensor<Scalar>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

  /// Gradient buffer for node `id`, zero-allocated on first access.
  Tensor<Scalar>& grad(int id) {
    Node& node = nodes_.at(static_cast<std::size_t>(id));
    if (node.grad.empty() && !node.value.empty()) node.grad = Tensor<Scalar>::zeros_like(node.value);
    return node.grad;
  }

  bool has_grad(int id) const { return !nodes_.at(static_cast<std::size_t>(id)).grad.empty(); }

  /// Reverse sweep from a scalar loss. Parameter leaves accumulate into
  /// Parameter::grad. May be called once per reset().
  void backward(Var<Scalar> loss) {
    if (backward_done_) throw Error("backward: already run on this tape; call reset() first");
    if (nodes_.empty()) throw Error("backward: tape is empty");
    if (loss.value().size() != 1) {
      throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    backward_done_ = true;
    grad(loss.id)[0] = Scalar(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& node = nodes_[static_cast<std::size_t>(id)];
      if (!node.requires_grad || node.grad.empty()) continue;
      if (node.backward) node.backward(*this, id);
      if (node.param != nullptr) {
        require_same_shape(node.param->grad.shape(), node.grad.shape(), "parameter grad");
        node.param->grad.array() += node.grad.array();
      }
    }
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

 private:
  Var<Scalar> push(Node node) {
    nodes_.push_back(std::move(node));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
};

}  // namespace cfedit
