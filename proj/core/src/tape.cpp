// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/tape.hpp"

#include "vibekit/error.hpp"

namespace vibekit {

const Tensor& Var::value() const {
  VIBEKIT_REQUIRE(tape_ != nullptr, ContractError, "Var::value on an unbound variable");
  return tape_->value(*this);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool needs = false;
  for (auto id : inputs) {
    VIBEKIT_REQUIRE(id < nodes_.size(), ContractError, "Tape::record: input from another tape");
    needs = needs || nodes_[id].requires_grad;
  }
  VIBEKIT_REQUIRE(!needs || fn, ContractError, "Tape::record: differentiable inputs but no backward rule");
  nodes_.push_back(Node{std::move(value), std::move(inputs), needs ? std::move(fn) : BackwardFn{}, needs,
                        std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_accumulator(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.grad) n.grad = Tensor(n.value.shape());
  return *n.grad;
}

const Tensor& Tape::upstream(std::size_t id) { return grad_accumulator(id); }

void Tape::backward(Var output) {
  VIBEKIT_REQUIRE(output.tape_ == this, ContractError, "backward: variable belongs to another tape");
  VIBEKIT_REQUIRE(value(output).numel() == 1, ContractError,
                  "backward: output must be scalar, got " + shape_str(value(output).shape()));
  for (auto& n : nodes_) n.grad.reset();
  backward_order_.clear();
  grad_accumulator(output.id_)[0] = 1.0;

  for (std::size_t i = output.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.grad) continue;
    backward_order_.push_back(i);
    if (n.backward) n.backward(*this, i);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id_);
  return n.grad ? *n.grad : Tensor(n.value.shape());
}

}  // namespace vibekit
