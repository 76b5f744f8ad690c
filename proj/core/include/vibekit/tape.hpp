// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "vibekit/tensor.hpp"

namespace vibekit {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. One tape per forward pass; discard it after backward().
///
/// Nodes are appended in evaluation order, so recording order is a
/// topological order and backward() simply walks it in reverse.
class Tape {
 public:
  /// Propagates the node's own gradient into the gradients of its inputs.
  using BackwardFn = std::function<void(Tape& tape, std::size_t node)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Non-differentiable input.
  Var constant(Tensor value);
  /// Records an op result. The node requires grad iff any input does; fn may be empty
  /// for ops whose inputs never require grad.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  const Tensor& value(Var v) const { return nodes_.at(v.id_).value; }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Seeds d(output)/d(output) = 1 and accumulates into every reachable node.
  /// `output` must hold exactly one element.
  void backward(Var output);

  /// Gradient after backward(); zeros for nodes the output does not depend on.
  Tensor grad(Var v) const;
  /// Mutable accumulator for op implementers; allocated on first touch.
  Tensor& grad_accumulator(std::size_t id);
  /// The node's gradient while backward() runs (zeros if none arrived).
  const Tensor& upstream(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  /// Node ids in the order backward() visited them.
  const std::vector<std::size_t>& last_backward_order() const { return backward_order_; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::optional<Tensor> grad;
  };

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
};

}  // namespace vibekit
