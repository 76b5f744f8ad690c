// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "oracles.hpp"
#include "vibekit/autodiff.hpp"
#include "vibekit/error.hpp"
#include "vibekit/grad_check.hpp"
#include "vibekit/ops.hpp"
#include "vibekit/rng.hpp"
#include "vibekit/tape.hpp"
#include "vibekit/tensor.hpp"

namespace vibekit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, MatrixFactoryRejectsRaggedRows) {
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), ShapeError);
  EXPECT_EQ(Tensor::matrix({{1, 2}, {3, 4}}).at(1, 0), 3.0);
}

// PCG32 reference output for seed 42, stream 54.
TEST(Rng, MatchesPcg32ReferenceVector) {
  Rng rng(42, 54);
  const std::uint32_t expected[] = {0xa15c02b7, 0x7b47f409, 0xba1d3330, 0x83d2f293, 0xbfa4784b, 0xcbed606e};
  for (std::uint32_t e : expected) EXPECT_EQ(rng.next_u32(), e);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(7), b(7), c(8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differs |= x != c.normal();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformStaysInUnitInterval) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowIsInRangeAndCoversIt) {
  Rng rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits.at(rng.below(7));
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  const Tensor g = gaussian({20000}, rng);
  const double m = ops::mean(g);
  const double v = ops::mean_square(g) - m * m;
  EXPECT_NEAR(m, 0.0, 0.03);
  EXPECT_NEAR(v, 1.0, 0.04);
}

TEST(Rng, BoxMullerUsesTwoUniformsPerPair) {
  Rng a(5), b(5);
  const double z0 = a.normal();
  const double z1 = a.normal();
  const double u1 = 1.0 - b.uniform();
  const double u2 = b.uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  EXPECT_DOUBLE_EQ(z0, r * std::cos(2.0 * M_PI * u2));
  EXPECT_DOUBLE_EQ(z1, r * std::sin(2.0 * M_PI * u2));
  EXPECT_EQ(a.next_u32(), b.next_u32());
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(ops::matmul(Tensor::identity(2), m), m);
}

TEST(Matmul, RowTimesColumn) {
  EXPECT_EQ(ops::matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})), Tensor::matrix({{11}}));
}

TEST(Matmul, ZeroAnnihilates) {
  Rng rng(0);
  const Tensor out = ops::matmul(Tensor({3, 4}), gaussian({4, 5}, rng));
  EXPECT_EQ(out, Tensor({3, 5}));
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  EXPECT_THROW(ops::matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
}

TEST(Matmul, AgreesWithNaiveProduct) {
  Rng rng(2);
  const Tensor a = gaussian({5, 7}, rng), b = gaussian({7, 3}, rng);
  EXPECT_LT(max_abs_diff(ops::matmul(a, b), oracle::naive_matmul(a, b)), 1e-12);
}

TEST(Softmax, SymmetricPair) {
  const Tensor s = ops::softmax_lastdim(Tensor::vector({0, 0}));
  EXPECT_EQ(s, Tensor::vector({0.5, 0.5}));
}

TEST(Softmax, LogOneLogThree) {
  const Tensor s = ops::softmax_lastdim(Tensor::vector({std::log(1.0), std::log(3.0)}));
  EXPECT_NEAR(s[0], 0.25, 1e-15);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Softmax, NegativeInfinityMapsToExactZero) {
  const Tensor s = ops::softmax_lastdim(Tensor::vector({5, -kInf}));
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], 0.0);
}

TEST(Softmax, FullyMaskedRowIsAnError) {
  const Tensor x = Tensor::matrix({{0, 1}, {-kInf, -kInf}});
  try {
    ops::softmax_lastdim(x);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("empty attention row"), std::string::npos);
  }
}

TEST(Softmax, RowsAreStochastic) {
  Rng rng(4);
  for (int seed = 0; seed < 10; ++seed) {
    const Tensor x = uniform({6, 9}, rng, -30.0, 30.0);
    const Tensor s = ops::softmax_lastdim(x);
    for (std::size_t i = 0; i < 6; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 9; ++j) {
        EXPECT_GE(s.at(i, j), 0.0);
        EXPECT_LE(s.at(i, j), 1.0);
        sum += s.at(i, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Ops, ElementwiseAndConcat) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b = Tensor::matrix({{5, 6}, {7, 8}});
  EXPECT_EQ(ops::add(a, b), Tensor::matrix({{6, 8}, {10, 12}}));
  EXPECT_EQ(ops::sub(b, a), Tensor::matrix({{4, 4}, {4, 4}}));
  EXPECT_EQ(ops::mul(a, b), Tensor::matrix({{5, 12}, {21, 32}}));
  EXPECT_EQ(ops::scale(a, 2), Tensor::matrix({{2, 4}, {6, 8}}));
  EXPECT_EQ(ops::axpy(a, -1, a), Tensor({2, 2}));
  EXPECT_EQ(ops::transpose(a), Tensor::matrix({{1, 3}, {2, 4}}));
  EXPECT_EQ(ops::concat(a, b, 0), Tensor::matrix({{1, 2}, {3, 4}, {5, 6}, {7, 8}}));
  EXPECT_EQ(ops::concat(a, b, 1), Tensor::matrix({{1, 2, 5, 6}, {3, 4, 7, 8}}));
  EXPECT_THROW(ops::add(a, Tensor({3})), ShapeError);
  EXPECT_EQ(ops::sum(a), 10.0);
  EXPECT_EQ(ops::mean(a), 2.5);
  EXPECT_EQ(ops::mean_square(a), 7.5);
}

TEST(Ops, AvgPoolOfRamp) {
  std::vector<double> v(16);
  std::iota(v.begin(), v.end(), 1.0);
  const Tensor x({4, 4}, v);
  EXPECT_EQ(ops::avg_pool2d(x, 2), Tensor::matrix({{3.5, 5.5}, {11.5, 13.5}}));
  EXPECT_EQ(ops::avg_pool2d(x, 1), x);
  EXPECT_THROW(ops::avg_pool2d(Tensor({3, 4}), 2), ShapeError);
}

TEST(Ops, NearestUpsampleRepeatsBlocks) {
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor up = ops::nearest_upsample2d(x, 2);
  EXPECT_EQ(up.shape(), (Shape{4, 4}));
  EXPECT_EQ(up.at(0, 1), 1.0);
  EXPECT_EQ(up.at(3, 2), 4.0);
  EXPECT_EQ(ops::avg_pool2d(up, 2), x);
}

TEST(Ops, BilinearUpsampleOfConstantIsConstant) {
  const Tensor up = ops::bilinear_upsample2d(Tensor::full({3, 2}, 1.25), 2);
  EXPECT_EQ(up, Tensor::full({6, 4}, 1.25));
}

TEST(Ops, BilinearUpsampleInterpolatesHalfPixelCentres) {
  // Row [0, 4] at factor 2: output centres sit at input coordinates -0.25, 0.25, 0.75, 1.25.
  const Tensor up = ops::bilinear_upsample2d(Tensor::matrix({{0, 4}}), 2);
  EXPECT_EQ(up.shape(), (Shape{2, 4}));
  const double expected[] = {0.0, 1.0, 3.0, 4.0};
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(up.at(0, j), expected[j], 1e-15);
}

TEST(Tape, BackwardVisitsInReverseRecordingOrder) {
  Tape tape;
  Var a = tape.leaf(Tensor::scalar(2));
  Var b = tape.leaf(Tensor::scalar(3));
  Var c = ad::mul(a, b);
  Var d = ad::add(c, a);
  tape.backward(d);
  const auto& order = tape.last_backward_order();
  ASSERT_FALSE(order.empty());
  for (std::size_t i = 1; i < order.size(); ++i) EXPECT_GT(order[i - 1], order[i]);
  EXPECT_EQ(order.front(), d.id());
  EXPECT_EQ(tape.grad(a).item(), 4.0);
  EXPECT_EQ(tape.grad(b).item(), 2.0);
}

TEST(Tape, UnusedNodesHaveZeroGradient) {
  Tape tape;
  Var a = tape.leaf(Tensor::vector({1, 2}));
  Var unused = tape.leaf(Tensor::vector({3, 4, 5}));
  Var side = ad::scale(unused, 2.0);
  Var out = ad::sum(ad::mul(a, a));
  tape.backward(out);
  EXPECT_EQ(tape.grad(unused), Tensor({3}));
  EXPECT_EQ(tape.grad(side), Tensor({3}));
  EXPECT_EQ(tape.grad(a), Tensor::vector({2, 4}));
}

TEST(Tape, BackwardNeedsScalarOutput) {
  Tape tape;
  Var a = tape.leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(a), ContractError);
}

TEST(Tape, ConstantsDoNotRequireGrad) {
  Tape tape;
  Var c = tape.constant(Tensor::vector({1, 2}));
  Var y = ad::scale(c, 3.0);
  EXPECT_FALSE(tape.requires_grad(y.id()));
}

TEST(GradCheck, SumOfSquares) {
  const ScalarFn f = [](Tape&, Var x) { return ad::sum(ad::mul(x, x)); };
  const GradCheckResult r = grad_check(f, Tensor::vector({1, 2}), 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_NEAR(r.analytic[0], 2.0, 1e-12);
  EXPECT_NEAR(r.analytic[1], 4.0, 1e-12);
}

TEST(GradCheck, ConstantFunction) {
  const ScalarFn f = [](Tape& tape, Var) { return tape.constant(Tensor::scalar(3.0)); };
  const GradCheckResult r = grad_check(f, Tensor::vector({1, 2, 3}), 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-8);
  for (double a : r.analytic) EXPECT_EQ(a, 0.0);
}

TEST(GradCheck, RejectsBadStepAndNonScalarOutput) {
  const ScalarFn id = [](Tape&, Var x) { return x; };
  EXPECT_THROW(grad_check(id, Tensor::vector({1, 2}), 1e-4), ContractError);
  const ScalarFn f = [](Tape&, Var x) { return ad::sum(x); };
  EXPECT_THROW(grad_check(f, Tensor::vector({1}), 1e-2), ContractError);
  EXPECT_THROW(grad_check(f, Tensor::vector({1}), 1e-8), ContractError);
}

// Every primitive, random inputs in [-1, 1], 10 seeds.
class PrimitiveGrad : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGrad, MatchesCentralDifferences) {
  const std::uint64_t seed = static_cast<std::uint64_t>(GetParam());
  Rng rng(seed, 100);
  const Tensor x = uniform({4, 4}, rng, -1.0, 1.0);
  const Tensor other = uniform({4, 4}, rng, -1.0, 1.0);
  const Tensor row = uniform({1, 4}, rng, -1.0, 1.0);
  const Tensor cube = uniform({4, 4, 2}, rng, -1.0, 1.0);
  const Tensor weights = uniform({4, 4}, rng, -1.0, 1.0);
  const double h = 1e-5;

  // Contract each output with a fixed random weight so every coordinate matters.
  auto dot = [&](Tape& tape, Var y) {
    Tensor w(y.shape());
    Rng wr(seed, 200);
    for (auto& e : w.data()) e = wr.uniform(-1.0, 1.0);
    return ad::sum(ad::mul(y, tape.constant(w)));
  };

  const std::vector<std::pair<const char*, ScalarFn>> cases = {
      {"add", [&](Tape& t, Var v) { return dot(t, ad::add(v, t.constant(other))); }},
      {"sub", [&](Tape& t, Var v) { return dot(t, ad::sub(t.constant(other), v)); }},
      {"mul", [&](Tape& t, Var v) { return dot(t, ad::mul(v, v)); }},
      {"scale", [&](Tape& t, Var v) { return dot(t, ad::scale(v, -1.7)); }},
      {"matmul_lhs", [&](Tape& t, Var v) { return dot(t, ad::matmul(v, t.constant(other))); }},
      {"matmul_rhs", [&](Tape& t, Var v) { return dot(t, ad::matmul(t.constant(other), v)); }},
      {"transpose", [&](Tape& t, Var v) { return dot(t, ad::transpose(v)); }},
      {"reshape", [&](Tape& t, Var v) { return dot(t, ad::reshape(v, {2, 8})); }},
      {"concat_rows", [&](Tape& t, Var v) { return dot(t, ad::concat_rows(v, ad::scale(v, 2.0))); }},
      {"softmax", [&](Tape& t, Var v) { return dot(t, ad::softmax_lastdim(v)); }},
      {"gelu", [&](Tape& t, Var v) { return dot(t, ad::gelu(v)); }},
      {"add_row", [&](Tape& t, Var v) { return dot(t, ad::add_row(v, t.constant(row))); }},
      {"mean", [&](Tape&, Var v) { return ad::mean(ad::mul(v, v)); }},
      {"mean_square", [&](Tape&, Var v) { return ad::mean_square(v); }},
  };
  for (const auto& [name, f] : cases) {
    const GradCheckResult r = grad_check(f, x, h);
    EXPECT_LT(r.max_rel_error, 1e-6) << name << " seed " << seed;
  }
  const ScalarFn row_grad = [&](Tape& t, Var v) { return dot(t, ad::add_row(t.constant(weights), v)); };
  EXPECT_LT(grad_check(row_grad, row, h).max_rel_error, 1e-6) << "add_row (row input)";
  const ScalarFn pool = [&](Tape& t, Var v) { return dot(t, ad::avg_pool2d(v, 2)); };
  EXPECT_LT(grad_check(pool, cube, h).max_rel_error, 1e-6) << "avg_pool2d";
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGrad, ::testing::Range(0, 10));

TEST(Determinism, SameSeedGivesBitIdenticalTensors) {
  Rng a(99, 3), b(99, 3);
  EXPECT_EQ(gaussian({8, 8}, a), gaussian({8, 8}, b));
  EXPECT_EQ(uniform({5}, a, -2, 2), uniform({5}, b, -2, 2));
}

}  // namespace
}  // namespace vibekit
