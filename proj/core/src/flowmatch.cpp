// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/flowmatch.hpp"

#include "vibekit/autodiff.hpp"
#include "vibekit/error.hpp"
#include "vibekit/ops.hpp"

namespace vibekit::flow {

namespace {

void require_t(double t, const char* op) {
  VIBEKIT_REQUIRE(t >= 0.0 && t <= 1.0, ContractError, std::string(op) + ": t must lie in [0, 1]");
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  VIBEKIT_REQUIRE(a.shape() == b.shape(), ShapeError,
                  std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor interpolate(const Tensor& x0, const Tensor& eps, double t, LinearSchedule sched) {
  require_same(x0, eps, "interpolate");
  require_t(t, "interpolate");
  const double a = sched.alpha(t);
  const double s = sched.sigma(t);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

Tensor velocity_target(const Tensor& x0, const Tensor& eps) {
  require_same(x0, eps, "velocity_target");
  return ops::sub(eps, x0);
}

FlowBatch make_batch(const Tensor& x0, const Tensor& eps, double t) {
  FlowBatch b{x0, eps, t, interpolate(x0, eps, t), velocity_target(x0, eps)};
  return b;
}

double loss_weight(Weighting w, double t) {
  switch (w) {
    case Weighting::kConstant:
      return 1.0;
    case Weighting::kTSquared:
      return t * t;
  }
  return 1.0;
}

Weighting parse_weighting(const std::string& name) {
  if (name == "constant") return Weighting::kConstant;
  if (name == "t_squared") return Weighting::kTSquared;
  throw ContractError("unknown loss weighting '" + name + "' (expected constant|t_squared)");
}

double fm_loss(const Tensor& v_pred, const Tensor& v_target, double weight) {
  require_same(v_pred, v_target, "fm_loss");
  VIBEKIT_REQUIRE(weight > 0.0, ContractError, "fm_loss: weight must be positive");
  return weight * ops::mean_square(ops::sub(v_pred, v_target));
}

Var fm_loss(Var v_pred, const Tensor& v_target, double weight) {
  require_same(v_pred.value(), v_target, "fm_loss");
  VIBEKIT_REQUIRE(weight > 0.0, ContractError, "fm_loss: weight must be positive");
  Var diff = ad::sub(v_pred, v_pred.tape()->constant(v_target));
  Var loss = ad::mean_square(diff);
  return weight == 1.0 ? loss : ad::scale(loss, weight);
}

OdeMethod parse_method(const std::string& name) {
  if (name == "euler") return OdeMethod::kEuler;
  if (name == "heun") return OdeMethod::kHeun;
  throw ContractError("unknown ODE method '" + name + "' (expected euler|heun)");
}

Tensor sample_ode(const VelocityField& v, const Tensor& x_start, std::size_t steps, OdeMethod method) {
  VIBEKIT_REQUIRE(steps >= 1, ContractError, "sample_ode: steps must be >= 1");
  return integrate_ode(v, x_start, 1.0, steps, method);
}

Tensor integrate_ode(const VelocityField& v, const Tensor& x_start, double t_start, std::size_t steps,
                     OdeMethod method) {
  VIBEKIT_REQUIRE(t_start > 0.0 && t_start <= 1.0, ContractError, "integrate_ode: t_start must lie in (0, 1]");
  Tensor x = x_start;
  const double n = static_cast<double>(steps);
  const double dt = t_start / n;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t_start * static_cast<double>(steps - k) / n;
    Tensor v0 = v(x, t);
    VIBEKIT_REQUIRE(v0.shape() == x.shape(), ShapeError, "velocity field changed the state shape");
    const bool last = k + 1 == steps;
    if (method == OdeMethod::kEuler || last) {
      x = ops::axpy(x, -dt, v0);
    } else {
      const double t_next = t_start * static_cast<double>(steps - k - 1) / n;
      const Tensor predictor = ops::axpy(x, -dt, v0);
      const Tensor v1 = v(predictor, t_next);
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] -= 0.5 * dt * (v0[i] + v1[i]);
    }
    VIBEKIT_REQUIRE(x.all_finite(), NumericError, "integration diverged at step " + std::to_string(k));
  }
  return x;
}

GaussianOracle::GaussianOracle(Tensor mean, double var) : mean_(std::move(mean)), var_(var) {
  VIBEKIT_REQUIRE(var > 0.0, ContractError, "GaussianOracle: variance must be positive");
  VIBEKIT_REQUIRE(mean_.numel() >= 1, ShapeError, "GaussianOracle: empty mean");
}

Tensor GaussianOracle::posterior_x0(const Tensor& x, double t) const {
  VIBEKIT_REQUIRE(mean_.numel() == 1 || mean_.shape() == x.shape(), ShapeError, "GaussianOracle: shape mismatch");
  const double a = 1.0 - t;
  const double s2 = a * a * var_ + t * t;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = mean_at(i) + a * var_ / s2 * (x[i] - a * mean_at(i));
  return out;
}

Tensor GaussianOracle::posterior_eps(const Tensor& x, double t) const {
  VIBEKIT_REQUIRE(mean_.numel() == 1 || mean_.shape() == x.shape(), ShapeError, "GaussianOracle: shape mismatch");
  const double a = 1.0 - t;
  const double s2 = a * a * var_ + t * t;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = t / s2 * (x[i] - a * mean_at(i));
  return out;
}

Tensor GaussianOracle::velocity(const Tensor& x, double t) const {
  return ops::sub(posterior_eps(x, t), posterior_x0(x, t));
}

VelocityField GaussianOracle::field() const {
  return [self = *this](const Tensor& x, double t) { return self.velocity(x, t); };
}

VelocityField point_mass_velocity(Tensor mu) {
  return [mu = std::move(mu)](const Tensor& x, double t) {
    VIBEKIT_REQUIRE(x.shape() == mu.shape(), ShapeError, "point_mass_velocity: shape mismatch");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = (x[i] - mu[i]) / t;
    return out;
  };
}

}  // namespace vibekit::flow
