// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vibekit/error.hpp"
#include "vibekit/flowmatch.hpp"
#include "vibekit/hfato.hpp"
#include "vibekit/ops.hpp"
#include "vibekit/rng.hpp"
#include "vibekit/tape.hpp"

namespace vibekit::hfato {
namespace {

// Smooth ramp plus white noise, the usual test image.
Tensor smooth_plus_noise(std::size_t h, std::size_t w, Rng& rng) {
  Tensor x({h, w});
  const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) x.at(i, j) = std::sin(a * i + b * j) + 0.3 * rng.normal();
  return x;
}

TEST(Degrade, ConstantImageIsFixed) {
  const Tensor c = Tensor::full({6, 4}, -0.75);
  EXPECT_EQ(degrade(c, {2, Upsample::kNearest}), c);
  EXPECT_EQ(degrade(c, {2, Upsample::kBilinear}), c);
}

TEST(Degrade, HandBlockMean) {
  EXPECT_EQ(degrade(Tensor::matrix({{0, 4}, {8, 4}}), {2, Upsample::kNearest}), Tensor::full({2, 2}, 4.0));
}

TEST(Degrade, FactorOneIsIdentity) {
  Rng rng(0);
  const Tensor x = gaussian({5, 7}, rng);
  EXPECT_EQ(degrade(x, {1, Upsample::kNearest}), x);
}

TEST(Degrade, MatchesBlockOracle) {
  Rng rng(1);
  for (std::size_t f : {2u, 4u}) {
    const Tensor x = gaussian({8, 12}, rng);
    EXPECT_LT(max_abs_diff(degrade(x, {f, Upsample::kNearest}), oracle::block_du(x, f)), 1e-15);
  }
}

TEST(Degrade, ChannelsAreIndependent) {
  Rng rng(2);
  const Tensor x = gaussian({4, 4, 3}, rng);
  const Tensor y = degrade(x, {2, Upsample::kNearest});
  for (std::size_t c = 0; c < 3; ++c) {
    Tensor plane({4, 4});
    for (std::size_t p = 0; p < 16; ++p) plane[p] = x[p * 3 + c];
    const Tensor expect = oracle::block_du(plane, 2);
    for (std::size_t p = 0; p < 16; ++p) EXPECT_NEAR(y[p * 3 + c], expect[p], 1e-15);
  }
}

TEST(Degrade, RejectsIndivisibleExtents) {
  EXPECT_THROW(degrade(Tensor({6, 5}), {2, Upsample::kNearest}), ContractError);
  EXPECT_THROW(degrade(Tensor({6}), {2, Upsample::kNearest}), ShapeError);
}

TEST(Degrade, IdempotentAndMeanPreserving) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = smooth_plus_noise(8, 16, rng);
    const DegradationConfig cfg{2, Upsample::kNearest};
    const Tensor once = degrade(x, cfg);
    EXPECT_LT(max_abs_diff(degrade(once, cfg), once), 1e-12);
    EXPECT_NEAR(ops::mean(once), ops::mean(x), 1e-12);
  }
}

TEST(Degrade, ParseNames) {
  EXPECT_EQ(parse_upsample("nearest"), Upsample::kNearest);
  EXPECT_EQ(parse_upsample("bilinear"), Upsample::kBilinear);
  EXPECT_EQ(to_string(Upsample::kBilinear), "bilinear");
  EXPECT_THROW(parse_upsample("bicubic"), ContractError);
  EXPECT_EQ(parse_variant("literal_additive"), NoiseVariant::kLiteralAdditive);
  EXPECT_THROW(parse_variant("additive"), ContractError);
}

TEST(HfatoForward, VariantInvariants) {
  Rng rng(4);
  const Tensor x0 = gaussian({4, 4}, rng), eps = gaussian({4, 4}, rng);
  for (double t : {0.0, 0.3, 1.0}) {
    const HFATOBatch a = hfato_forward(x0, eps, t, {}, NoiseVariant::kInterpolated);
    const HFATOBatch b = hfato_forward(x0, eps, t, {}, NoiseVariant::kLiteralAdditive);
    EXPECT_EQ(a.x0_deg, oracle::block_du(x0, 2));
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_NEAR(a.xt[i], (1 - t) * a.x0_deg[i] + t * eps[i], 1e-12);
      EXPECT_NEAR(b.xt[i], b.x0_deg[i] + t * eps[i], 1e-12);
    }
  }
}

TEST(HfatoForward, Endpoints) {
  Rng rng(5);
  const Tensor x0 = gaussian({4, 4}, rng), eps = gaussian({4, 4}, rng);
  EXPECT_EQ(hfato_forward(x0, eps, 0.0, {}).xt, degrade(x0, {}));
  EXPECT_EQ(hfato_forward(x0, eps, 0.0, {}, NoiseVariant::kLiteralAdditive).xt, degrade(x0, {}));
  EXPECT_EQ(hfato_forward(x0, eps, 1.0, {}).xt, eps);
  const Tensor lit = hfato_forward(x0, eps, 1.0, {}, NoiseVariant::kLiteralAdditive).xt;
  EXPECT_EQ(lit, ops::add(degrade(x0, {}), eps));
  EXPECT_GT(max_abs_diff(lit, eps), 0.0);
}

TEST(HfatoForward, FactorOneReducesToInterpolate) {
  Rng rng(6);
  const Tensor x0 = gaussian({4, 6}, rng), eps = gaussian({4, 6}, rng);
  for (double t : {0.1, 0.5, 0.9}) EXPECT_EQ(hfato_forward(x0, eps, t, {1}).xt, flow::interpolate(x0, eps, t));
}

TEST(ReconstructX0, Examples) {
  Rng rng(7);
  const Tensor xt = gaussian({3, 3}, rng);
  EXPECT_EQ(reconstruct_x0(xt, gaussian({3, 3}, rng), 0.0), xt);

  const Tensor x0 = Tensor::vector({1}), eps = Tensor::vector({3});
  const HFATOBatch b = hfato_forward(x0.reshaped({1, 1}), eps.reshaped({1, 1}), 0.5, {1});
  EXPECT_EQ(b.xt[0], 2.0);
  EXPECT_EQ(reconstruct_x0(b.xt, flow::velocity_target(x0, eps).reshaped({1, 1}), 0.5)[0], 1.0);
  EXPECT_THROW(reconstruct_x0(xt, Tensor({2}), 0.5), ShapeError);
}

TEST(ReconstructX0, OracleVelocityRecoversDegradedLatent) {
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const Tensor x0 = smooth_plus_noise(8, 8, rng), eps = gaussian({8, 8}, rng);
    const double t = rng.uniform(0.01, 1.0);
    const HFATOBatch b = hfato_forward(x0, eps, t, {});
    const Tensor v_star = ops::sub(eps, b.x0_deg);
    const Tensor x0_hat = reconstruct_x0(b.xt, v_star, t);
    EXPECT_LT(max_abs_diff(x0_hat, b.x0_deg), 1e-12);
    const double residual = ops::mean_square(ops::sub(oracle::block_du(x0, 2), x0));
    EXPECT_NEAR(hfato_loss(x0_hat, x0), residual, 1e-10);
  }
}

TEST(HfatoLoss, Examples) {
  Rng rng(9);
  const Tensor x0 = gaussian({4, 4}, rng);
  EXPECT_EQ(hfato_loss(x0, x0), 0.0);
  EXPECT_NEAR(hfato_loss(ops::add(x0, Tensor::full({4, 4}, 1.0)), x0), 1.0, 1e-15);
  EXPECT_THROW(hfato_loss(x0, Tensor({4})), ShapeError);
}

TEST(HfatoLoss, ZeroWithoutDegradationUnderOracleVelocity) {
  Rng rng(10);
  const Tensor x0 = gaussian({6, 6}, rng), eps = gaussian({6, 6}, rng);
  const HFATOBatch b = hfato_forward(x0, eps, 0.6, {1});
  EXPECT_NEAR(hfato_loss(reconstruct_x0(b.xt, flow::velocity_target(x0, eps), 0.6), x0), 0.0, 1e-24);
}

TEST(HfatoLoss, TapeVersionMatches) {
  Rng rng(11);
  const Tensor xt = gaussian({4, 4}, rng), v = gaussian({4, 4}, rng), x0 = gaussian({4, 4}, rng);
  Tape tape;
  const double taped = hfato_loss(reconstruct_x0(xt, tape.leaf(v), 0.4), x0).value().item();
  EXPECT_NEAR(taped, hfato_loss(reconstruct_x0(xt, v, 0.4), x0), 1e-15);
}

TEST(HfEnergy, ConstantAndCheckerboard) {
  EXPECT_EQ(hf_energy(Tensor::full({5, 5}, 3.0)), 0.0);
  Tensor cb({6, 7});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 7; ++j) cb.at(i, j) = (i + j) % 2 ? -1.0 : 1.0;
  EXPECT_EQ(hf_energy(cb), 64.0);
  EXPECT_THROW(hf_energy(Tensor({2, 5})), ContractError);
}

TEST(HfEnergy, MatchesStencilOracle) {
  Rng rng(12);
  const Tensor x = gaussian({9, 11}, rng);
  EXPECT_NEAR(hf_energy(x), oracle::laplacian_energy(x), 1e-12);
}

TEST(HfEnergy, DegradationIsAContraction) {
  Rng rng(0);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = gaussian({16, 16}, rng);
    EXPECT_LE(hf_energy(degrade(x, {2})), hf_energy(x)) << "image " << i;
  }
}

// Nearest upsampling turns a smooth ramp into a staircase, whose edges carry
// more Laplacian energy than the ramp did. The contraction is a property of
// noisy content, not of every image.
TEST(HfEnergy, SmoothContentCanGainEnergy) {
  Tensor x({16, 16});
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) x.at(i, j) = std::sin(0.3 * i + 0.2 * j);
  EXPECT_GT(hf_energy(degrade(x, {2})), hf_energy(x));
}

}  // namespace
}  // namespace vibekit::hfato
