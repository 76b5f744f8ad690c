// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>

#include "vibekit/tensor.hpp"

namespace vibekit {

/// PCG32 (XSH-RR, 64-bit state, 32-bit output) with selectable stream.
///
/// Seeding follows the reference `pcg32_srandom_r(initstate, initseq)`, so
/// `Rng(42, 54)` reproduces the published demo sequence 0xa15c02b7,
/// 0x7b47f409, 0xba1d3330, ... Doubles use 53 bits taken from two
/// consecutive outputs; normals come from Box-Muller, two uniforms per pair,
/// with the second value of each pair cached for the next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound).
  std::uint32_t below(std::uint32_t bound);
  double normal();

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
  std::optional<double> spare_;
};

/// Tensor of i.i.d. N(0, stddev^2) draws, filled in row-major order.
Tensor gaussian(Shape shape, Rng& rng, double stddev = 1.0);
/// Tensor of i.i.d. U[lo, hi) draws.
Tensor uniform(Shape shape, Rng& rng, double lo, double hi);

}  // namespace vibekit
