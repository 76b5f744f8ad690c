// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "vibekit/tensor.hpp"

namespace vibekit::ops {

// Shape conventions: matrices are [rows, cols]; images are [H, W] or [H, W, C].

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// a + c * b, elementwise.
Tensor axpy(const Tensor& a, double c, const Tensor& b);

/// Concatenation along `axis`; every other extent must agree.
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);

/// Softmax over the last axis, max-subtracted. -inf entries map to exactly 0.
/// Throws NumericError("empty attention row") when a whole row is -inf.
Tensor softmax_lastdim(const Tensor& x);

double sum(const Tensor& a);
double mean(const Tensor& a);
/// mean(a^2)
double mean_square(const Tensor& a);

/// Non-overlapping factor x factor average pooling of an [H, W] or [H, W, C] tensor.
Tensor avg_pool2d(const Tensor& x, std::size_t factor);
/// Each pixel replicated into a factor x factor block.
Tensor nearest_upsample2d(const Tensor& x, std::size_t factor);
/// Half-pixel-centred bilinear upsampling with edge clamping.
Tensor bilinear_upsample2d(const Tensor& x, std::size_t factor);

/// tanh-approximated GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

}  // namespace vibekit::ops
