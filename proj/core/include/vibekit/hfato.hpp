// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "vibekit/tape.hpp"
#include "vibekit/tensor.hpp"

// High-frequency-aware objective: degrade the clean latent with a
// downsample-upsample operator, noise the degraded latent, reconstruct
// x0_hat = x_t - sigma_t * v and supervise it against the CLEAN latent.
namespace vibekit::hfato {

enum class Upsample { kNearest, kBilinear };
Upsample parse_upsample(const std::string& name);
std::string to_string(Upsample up);

struct DegradationConfig {
  std::size_t factor = 2;
  Upsample up = Upsample::kNearest;
};

/// interpolated:     x_t = (1 - t) * x0_deg + t * eps  (schedule-consistent, default)
/// literal_additive: x_t = x0_deg + t * eps            (no attenuation of x0_deg)
enum class NoiseVariant { kInterpolated, kLiteralAdditive };
NoiseVariant parse_variant(const std::string& name);

struct HFATOBatch {
  Tensor x0;
  Tensor x0_deg;
  Tensor eps;
  double t = 0.0;
  Tensor xt;
  NoiseVariant variant = NoiseVariant::kInterpolated;
};

/// Average-pool by `factor`, then upsample back to the input extents. [H, W] or [H, W, C].
Tensor degrade(const Tensor& x0, const DegradationConfig& cfg);

HFATOBatch hfato_forward(const Tensor& x0, const Tensor& eps, double t, const DegradationConfig& cfg,
                         NoiseVariant variant = NoiseVariant::kInterpolated);

/// xt - t * v.
Tensor reconstruct_x0(const Tensor& xt, const Tensor& v, double t);
Var reconstruct_x0(const Tensor& xt, Var v, double t);

/// mean((x0_hat - x0_clean)^2).
double hfato_loss(const Tensor& x0_hat, const Tensor& x0_clean);
Var hfato_loss(Var x0_hat, const Tensor& x0_clean);

/// Mean squared response of the 5-point Laplacian over interior pixels of an [H, W] image.
double hf_energy(const Tensor& x);

}  // namespace vibekit::hfato
