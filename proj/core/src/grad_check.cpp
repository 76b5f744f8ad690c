// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vibekit/error.hpp"

namespace vibekit {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  Var out = f(tape, tape.leaf(x));
  VIBEKIT_REQUIRE(out.value().numel() == 1, ContractError,
                  "grad_check: function output must be scalar, got " + shape_str(out.value().shape()));
  return out.value()[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double h, const std::vector<std::size_t>& coords) {
  VIBEKIT_REQUIRE(h >= 1e-6 && h <= 1e-3, ContractError, "grad_check: step must lie in [1e-6, 1e-3]");

  Tensor analytic_grad;
  {
    Tape tape;
    Var in = tape.leaf(x);
    Var out = f(tape, in);
    VIBEKIT_REQUIRE(out.value().numel() == 1, ContractError,
                    "grad_check: function output must be scalar, got " + shape_str(out.value().shape()));
    tape.backward(out);
    analytic_grad = tape.grad(in);
  }

  std::vector<std::size_t> idx = coords;
  if (idx.empty()) {
    idx.resize(x.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }

  GradCheckResult result;
  Tensor probe = x;
  for (std::size_t i : idx) {
    VIBEKIT_REQUIRE(i < x.numel(), ContractError, "grad_check: coordinate out of range");
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = evaluate(f, probe);
    probe[i] = orig - h;
    const double fm = evaluate(f, probe);
    probe[i] = orig;

    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = analytic_grad[i];
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
    if (result.analytic.empty() || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
    result.analytic.push_back(analytic);
    result.numeric.push_back(numeric);
  }
  return result;
}

}  // namespace vibekit
