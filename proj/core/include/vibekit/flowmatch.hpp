// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "vibekit/tape.hpp"
#include "vibekit/tensor.hpp"

namespace vibekit::flow {

/// alpha(t) = 1 - t, sigma(t) = t on [0, 1].
struct LinearSchedule {
  static constexpr double alpha(double t) { return 1.0 - t; }
  static constexpr double sigma(double t) { return t; }
};

/// v(x, t); must return a tensor shaped like x.
using VelocityField = std::function<Tensor(const Tensor& x, double t)>;

struct FlowBatch {
  Tensor x0;
  Tensor eps;
  double t = 0.0;
  Tensor xt;
  Tensor v_target;
};

/// alpha(t) * x0 + sigma(t) * eps.
Tensor interpolate(const Tensor& x0, const Tensor& eps, double t, LinearSchedule sched = {});
/// eps - x0; the time derivative of interpolate() under the linear schedule.
Tensor velocity_target(const Tensor& x0, const Tensor& eps);
FlowBatch make_batch(const Tensor& x0, const Tensor& eps, double t);

/// Time reweighting w(t) applied to the velocity MSE.
enum class Weighting { kConstant, kTSquared };
double loss_weight(Weighting w, double t);
Weighting parse_weighting(const std::string& name);

/// weight * mean((v_pred - v_target)^2)
double fm_loss(const Tensor& v_pred, const Tensor& v_target, double weight = 1.0);
Var fm_loss(Var v_pred, const Tensor& v_target, double weight = 1.0);

enum class OdeMethod { kEuler, kHeun };
OdeMethod parse_method(const std::string& name);

/// Integrates dx = v dt from t = 1 down to 0 over `steps` uniform steps.
/// The field is evaluated at t_k = (steps - k) / steps for k < steps, never at 0.
Tensor sample_ode(const VelocityField& v, const Tensor& x_start, std::size_t steps, OdeMethod method);

/// Same integrator starting from t_start in (0, 1]: t_k = t_start * (steps - k) / steps.
/// steps == 0 returns x_start.
Tensor integrate_ode(const VelocityField& v, const Tensor& x_start, double t_start, std::size_t steps,
                     OdeMethod method);

/// Exact marginal velocity for data ~ N(mean, var * I) under the linear schedule.
class GaussianOracle {
 public:
  /// `mean` either matches the sample shape or holds a single broadcast value.
  GaussianOracle(Tensor mean, double var);

  Tensor posterior_x0(const Tensor& x, double t) const;   // E[x0 | x_t = x]
  Tensor posterior_eps(const Tensor& x, double t) const;  // E[eps | x_t = x]
  Tensor velocity(const Tensor& x, double t) const;
  VelocityField field() const;

 private:
  double mean_at(std::size_t i) const { return mean_.numel() == 1 ? mean_[0] : mean_[i]; }

  Tensor mean_;
  double var_;
};

/// v(x, t) = (x - mu) / t: the velocity field of a point mass at mu.
VelocityField point_mass_velocity(Tensor mu);

}  // namespace vibekit::flow
