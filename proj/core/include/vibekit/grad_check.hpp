// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "vibekit/tape.hpp"

namespace vibekit {

/// Builds a scalar from a differentiable input on the given tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;  // per checked coordinate
  std::vector<double> numeric;
};

/// Compares the tape gradient of f at x with central differences of step h.
///
/// Error per coordinate is |analytic - numeric| / max(1, |analytic|); the
/// maximum is reported. `coords` restricts the check to a subset of flat
/// indices (all coordinates when empty). h must lie in [1e-6, 1e-3].
GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double h,
                           const std::vector<std::size_t>& coords = {});

}  // namespace vibekit
