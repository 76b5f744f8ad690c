// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/hfato.hpp"

#include "vibekit/autodiff.hpp"
#include "vibekit/error.hpp"
#include "vibekit/ops.hpp"

namespace vibekit::hfato {

Upsample parse_upsample(const std::string& name) {
  if (name == "nearest") return Upsample::kNearest;
  if (name == "bilinear") return Upsample::kBilinear;
  throw ContractError("unknown upsampling '" + name + "' (expected nearest|bilinear)");
}

std::string to_string(Upsample up) { return up == Upsample::kNearest ? "nearest" : "bilinear"; }

NoiseVariant parse_variant(const std::string& name) {
  if (name == "interpolated") return NoiseVariant::kInterpolated;
  if (name == "literal_additive") return NoiseVariant::kLiteralAdditive;
  throw ContractError("unknown noising variant '" + name + "' (expected interpolated|literal_additive)");
}

Tensor degrade(const Tensor& x0, const DegradationConfig& cfg) {
  VIBEKIT_REQUIRE(cfg.factor >= 1, ContractError, "degrade: factor must be >= 1");
  VIBEKIT_REQUIRE(x0.rank() == 2 || x0.rank() == 3, ShapeError,
                  "degrade: expected [H, W] or [H, W, C], got " + shape_str(x0.shape()));
  VIBEKIT_REQUIRE(x0.dim(0) % cfg.factor == 0 && x0.dim(1) % cfg.factor == 0, ContractError,
                  "degrade: extents " + shape_str(x0.shape()) + " not divisible by " + std::to_string(cfg.factor));
  if (cfg.factor == 1) return x0;
  const Tensor low = ops::avg_pool2d(x0, cfg.factor);
  return cfg.up == Upsample::kNearest ? ops::nearest_upsample2d(low, cfg.factor)
                                      : ops::bilinear_upsample2d(low, cfg.factor);
}

HFATOBatch hfato_forward(const Tensor& x0, const Tensor& eps, double t, const DegradationConfig& cfg,
                         NoiseVariant variant) {
  VIBEKIT_REQUIRE(x0.shape() == eps.shape(), ShapeError,
                  "hfato_forward: shape mismatch " + shape_str(x0.shape()) + " vs " + shape_str(eps.shape()));
  VIBEKIT_REQUIRE(t >= 0.0 && t <= 1.0, ContractError, "hfato_forward: t must lie in [0, 1]");
  HFATOBatch b;
  b.x0 = x0;
  b.x0_deg = degrade(x0, cfg);
  b.eps = eps;
  b.t = t;
  b.variant = variant;
  const double keep = variant == NoiseVariant::kInterpolated ? 1.0 - t : 1.0;
  b.xt = Tensor(x0.shape());
  for (std::size_t i = 0; i < x0.numel(); ++i) b.xt[i] = keep * b.x0_deg[i] + t * eps[i];
  return b;
}

Tensor reconstruct_x0(const Tensor& xt, const Tensor& v, double t) {
  VIBEKIT_REQUIRE(xt.shape() == v.shape(), ShapeError,
                  "reconstruct_x0: shape mismatch " + shape_str(xt.shape()) + " vs " + shape_str(v.shape()));
  VIBEKIT_REQUIRE(t >= 0.0 && t <= 1.0, ContractError, "reconstruct_x0: t must lie in [0, 1]");
  return ops::axpy(xt, -t, v);
}

Var reconstruct_x0(const Tensor& xt, Var v, double t) {
  VIBEKIT_REQUIRE(xt.shape() == v.value().shape(), ShapeError, "reconstruct_x0: shape mismatch");
  VIBEKIT_REQUIRE(t >= 0.0 && t <= 1.0, ContractError, "reconstruct_x0: t must lie in [0, 1]");
  return ad::sub(v.tape()->constant(xt), ad::scale(v, t));
}

double hfato_loss(const Tensor& x0_hat, const Tensor& x0_clean) {
  VIBEKIT_REQUIRE(x0_hat.shape() == x0_clean.shape(), ShapeError, "hfato_loss: shape mismatch");
  return ops::mean_square(ops::sub(x0_hat, x0_clean));
}

Var hfato_loss(Var x0_hat, const Tensor& x0_clean) {
  VIBEKIT_REQUIRE(x0_hat.value().shape() == x0_clean.shape(), ShapeError, "hfato_loss: shape mismatch");
  return ad::mean_square(ad::sub(x0_hat, x0_hat.tape()->constant(x0_clean)));
}

double hf_energy(const Tensor& x) {
  VIBEKIT_REQUIRE(x.rank() == 2, ShapeError, "hf_energy: expected an [H, W] image, got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1);
  VIBEKIT_REQUIRE(h >= 3 && w >= 3, ContractError, "hf_energy: image must be at least 3x3");
  double acc = 0.0;
  for (std::size_t y = 1; y + 1 < h; ++y)
    for (std::size_t c = 1; c + 1 < w; ++c) {
      const double r = x.at(y - 1, c) + x.at(y + 1, c) + x.at(y, c - 1) + x.at(y, c + 1) - 4.0 * x.at(y, c);
      acc += r * r;
    }
  return acc / static_cast<double>((h - 2) * (w - 2));
}

}  // namespace vibekit::hfato
