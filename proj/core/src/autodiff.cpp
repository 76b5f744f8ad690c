// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/autodiff.hpp"

#include "vibekit/error.hpp"
#include "vibekit/ops.hpp"

namespace vibekit::ad {

namespace {

Tape& tape_of(Var a, Var b) {
  VIBEKIT_REQUIRE(a.valid() && a.tape() == b.tape(), ContractError, "operands recorded on different tapes");
  return *a.tape();
}

Tape& tape_of(Var a) {
  VIBEKIT_REQUIRE(a.valid(), ContractError, "operand is not bound to a tape");
  return *a.tape();
}

void accumulate(Tape& t, std::size_t id, const Tensor& g) {
  if (!t.requires_grad(id)) return;
  Tensor& acc = t.grad_accumulator(id);
  for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
}

void accumulate_scaled(Tape& t, std::size_t id, const Tensor& g, double c) {
  if (!t.requires_grad(id)) return;
  Tensor& acc = t.grad_accumulator(id);
  for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += c * g[i];
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const auto ia = a.id(), ib = b.id();
  return t.record(ops::add(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t n) {
    const Tensor& g = tp.upstream(n);
    accumulate(tp, ia, g);
    accumulate(tp, ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const auto ia = a.id(), ib = b.id();
  return t.record(ops::sub(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t n) {
    const Tensor& g = tp.upstream(n);
    accumulate(tp, ia, g);
    accumulate_scaled(tp, ib, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const auto ia = a.id(), ib = b.id();
  return t.record(ops::mul(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t n) {
    const Tensor& g = tp.upstream(n);
    if (tp.requires_grad(ia)) accumulate(tp, ia, ops::mul(g, tp.value(ib)));
    if (tp.requires_grad(ib)) accumulate(tp, ib, ops::mul(g, tp.value(ia)));
  });
}

Var scale(Var a, double c) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(ops::scale(a.value(), c), {ia},
                  [ia, c](Tape& tp, std::size_t n) { accumulate_scaled(tp, ia, tp.upstream(n), c); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const auto ia = a.id(), ib = b.id();
  return t.record(ops::matmul(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t n) {
    const Tensor& g = tp.upstream(n);
    if (tp.requires_grad(ia)) accumulate(tp, ia, ops::matmul(g, ops::transpose(tp.value(ib))));
    if (tp.requires_grad(ib)) accumulate(tp, ib, ops::matmul(ops::transpose(tp.value(ia)), g));
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(ops::transpose(a.value()), {ia},
                  [ia](Tape& tp, std::size_t n) { accumulate(tp, ia, ops::transpose(tp.upstream(n))); });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value().reshaped(std::move(shape)), {ia},
                  [ia](Tape& tp, std::size_t n) { accumulate(tp, ia, tp.upstream(n)); });
}

Var concat_rows(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const auto ia = a.id(), ib = b.id();
  const std::size_t split = a.value().numel();
  return t.record(ops::concat(a.value(), b.value(), 0), {ia, ib}, [ia, ib, split](Tape& tp, std::size_t n) {
    const Tensor& g = tp.upstream(n);
    if (tp.requires_grad(ia)) {
      Tensor& acc = tp.grad_accumulator(ia);
      for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& acc = tp.grad_accumulator(ib);
      for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[split + i];
    }
  });
}

Var softmax_lastdim(Var x) {
  Tape& t = tape_of(x);
  const auto ix = x.id();
  return t.record(ops::softmax_lastdim(x.value()), {ix}, [ix](Tape& tp, std::size_t n) {
    const Tensor& y = tp.value(n);
    const Tensor& g = tp.upstream(n);
    Tensor& acc = tp.grad_accumulator(ix);
    const std::size_t cols = y.shape().back();
    for (std::size_t r = 0; r < y.numel() / cols; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t k = r * cols + j;
        acc[k] += y[k] * (g[k] - dot);
      }
    }
  });
}

Var gelu(Var x) {
  Tape& t = tape_of(x);
  const auto ix = x.id();
  Tensor out = x.value();
  for (auto& v : out.data()) v = ops::gelu(v);
  return t.record(std::move(out), {ix}, [ix](Tape& tp, std::size_t n) {
    const Tensor& in = tp.value(ix);
    const Tensor& g = tp.upstream(n);
    Tensor& acc = tp.grad_accumulator(ix);
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i] * ops::gelu_grad(in[i]);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  VIBEKIT_REQUIRE(av.rank() == 2 && rv.rank() == 2 && rv.dim(0) == 1 && rv.dim(1) == av.dim(1), ShapeError,
                  "add_row: cannot broadcast " + shape_str(rv.shape()) + " onto " + shape_str(av.shape()));
  const std::size_t m = av.dim(0), cols = av.dim(1);
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) += rv[j];
  const auto ia = a.id(), ir = row.id();
  return t.record(std::move(out), {ia, ir}, [ia, ir, m, cols](Tape& tp, std::size_t n) {
    const Tensor& g = tp.upstream(n);
    accumulate(tp, ia, g);
    if (tp.requires_grad(ir)) {
      Tensor& acc = tp.grad_accumulator(ir);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cols; ++j) acc[j] += g[i * cols + j];
    }
  });
}

Var avg_pool2d(Var x, std::size_t factor) {
  Tape& t = tape_of(x);
  const auto ix = x.id();
  const Shape in_shape = x.value().shape();
  return t.record(ops::avg_pool2d(x.value(), factor), {ix}, [ix, in_shape, factor](Tape& tp, std::size_t n) {
    const Tensor& g = tp.upstream(n);
    Tensor& acc = tp.grad_accumulator(ix);
    const std::size_t w = in_shape[1];
    const std::size_t c = in_shape.size() == 3 ? in_shape[2] : 1;
    const std::size_t ow = w / factor;
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t y = 0; y < in_shape[0]; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        for (std::size_t ch = 0; ch < c; ++ch)
          acc[(y * w + xx) * c + ch] += inv * g[((y / factor) * ow + xx / factor) * c + ch];
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(Tensor::scalar(ops::sum(a.value())), {ia}, [ia](Tape& tp, std::size_t n) {
    const double g = tp.upstream(n)[0];
    Tensor& acc = tp.grad_accumulator(ia);
    for (auto& v : acc.data()) v += g;
  });
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(Tensor::scalar(ops::mean(a.value())), {ia}, [ia](Tape& tp, std::size_t n) {
    Tensor& acc = tp.grad_accumulator(ia);
    const double g = tp.upstream(n)[0] / static_cast<double>(acc.numel());
    for (auto& v : acc.data()) v += g;
  });
}

Var mean_square(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(Tensor::scalar(ops::mean_square(a.value())), {ia}, [ia](Tape& tp, std::size_t n) {
    const Tensor& x = tp.value(ia);
    Tensor& acc = tp.grad_accumulator(ia);
    const double g = 2.0 * tp.upstream(n)[0] / static_cast<double>(acc.numel());
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g * x[i];
  });
}

}  // namespace vibekit::ad
