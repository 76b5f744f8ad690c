// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Finite-difference check of the loss gradient with respect to the model's
// own weights, evaluated at a sampled subset of coordinates per weight.

#include <algorithm>
#include <string>

#include "vibekit/flowmatch.hpp"
#include "vibekit/grad_check.hpp"
#include "vibekit/hfato.hpp"
#include "vibekit/rng.hpp"
#include "vibekit/toydit.hpp"

namespace vibekit::testing {

inline Var model_loss(Tape& tp, const dit::ToyDiT& model, const std::string& wrt, Var w, const Tensor& x0,
                      const Tensor& eps, double t, dit::AttentionMode mode, dit::Objective objective) {
  const dit::ToyDiT::WeightFn weights = [&](Tape& tape, const std::string& name) {
    return name == wrt ? w : tape.constant(model.weights().get(name));
  };
  if (objective == dit::Objective::kFlowMatching) {
    const flow::FlowBatch b = flow::make_batch(x0, eps, t);
    return flow::fm_loss(model.forward(tp, b.xt, t, mode, weights), b.v_target);
  }
  const hfato::HFATOBatch b = hfato::hfato_forward(x0, eps, t, {});
  return hfato::hfato_loss(hfato::reconstruct_x0(b.xt, model.forward(tp, b.xt, t, mode, weights), t), x0);
}

/// Largest relative error over `per_weight` random coordinates of every weight.
inline double model_grad_error(const dit::ToyDiT& model, const Tensor& x0, const Tensor& eps, double t,
                               dit::AttentionMode mode, dit::Objective objective, std::uint64_t seed,
                               std::size_t per_weight = 4, double h = 1e-4) {
  Rng pick(seed, 77);
  double worst = 0.0;
  for (const auto& [name, value] : model.weights().entries()) {
    std::vector<std::size_t> coords;
    for (std::size_t i = 0; i < per_weight; ++i) coords.push_back(pick.below(static_cast<std::uint32_t>(value.numel())));
    const ScalarFn f = [&, wrt = name](Tape& tp, Var w) {
      return model_loss(tp, model, wrt, w, x0, eps, t, mode, objective);
    };
    worst = std::max(worst, grad_check(f, value, h, coords).max_rel_error);
  }
  return worst;
}

}  // namespace vibekit::testing
