// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "vibekit/tape.hpp"

// Differentiable counterparts of vibekit::ops. Every function records one node.
namespace vibekit::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
/// Concatenation along axis 0.
Var concat_rows(Var a, Var b);
Var softmax_lastdim(Var x);
Var gelu(Var x);
/// Broadcast-adds a [1, n] row to every row of an [m, n] matrix.
Var add_row(Var a, Var row);
/// Average pooling of an [H, W, C] tensor.
Var avg_pool2d(Var x, std::size_t factor);

Var sum(Var a);
Var mean(Var a);
/// mean(a^2), a scalar.
Var mean_square(Var a);

}  // namespace vibekit::ad
