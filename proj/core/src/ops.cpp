// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vibekit/error.hpp"

namespace vibekit::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  VIBEKIT_REQUIRE(a.shape() == b.shape(), ShapeError,
                  std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_matrix(const Tensor& a, const char* op) {
  VIBEKIT_REQUIRE(a.rank() == 2, ShapeError, std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

struct ImageDims {
  std::size_t h, w, c;
};

ImageDims image_dims(const Tensor& x, const char* op) {
  VIBEKIT_REQUIRE(x.rank() == 2 || x.rank() == 3, ShapeError,
                  std::string(op) + ": expected [H, W] or [H, W, C], got " + shape_str(x.shape()));
  return {x.dim(0), x.dim(1), x.rank() == 3 ? x.dim(2) : 1};
}

Shape image_shape(const Tensor& like, std::size_t h, std::size_t w) {
  Shape s = like.shape();
  s[0] = h;
  s[1] = w;
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  VIBEKIT_REQUIRE(b.dim(0) == k, ShapeError,
                  "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out({m, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* po = out.raw();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (auto& v : out.data()) v *= c;
  return out;
}

Tensor axpy(const Tensor& a, double c, const Tensor& b) {
  require_same_shape(a, b, "axpy");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c * b[i];
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  VIBEKIT_REQUIRE(a.rank() == b.rank() && axis < a.rank(), ShapeError,
                  "concat: incompatible ranks " + shape_str(a.shape()) + ", " + shape_str(b.shape()));
  for (std::size_t i = 0; i < a.rank(); ++i) {
    VIBEKIT_REQUIRE(i == axis || a.dim(i) == b.dim(i), ShapeError,
                    "concat: extents differ off-axis " + shape_str(a.shape()) + ", " + shape_str(b.shape()));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t ca = a.dim(axis) * inner;
  const std::size_t cb = b.dim(axis) * inner;

  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  Tensor out(shape);
  double* po = out.raw();
  for (std::size_t o = 0; o < outer; ++o) {
    po = std::copy_n(a.raw() + o * ca, ca, po);
    po = std::copy_n(b.raw() + o * cb, cb, po);
  }
  return out;
}

Tensor softmax_lastdim(const Tensor& x) {
  VIBEKIT_REQUIRE(x.rank() >= 1 && x.shape().back() >= 1, ShapeError, "softmax: last axis must be non-empty");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.raw() + r * n;
    double* o = out.raw() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[j]);
    VIBEKIT_REQUIRE(mx != -std::numeric_limits<double>::infinity(), NumericError,
                    "empty attention row " + std::to_string(r));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return out;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

double mean(const Tensor& a) {
  VIBEKIT_REQUIRE(a.numel() > 0, ShapeError, "mean of empty tensor");
  return sum(a) / static_cast<double>(a.numel());
}

double mean_square(const Tensor& a) {
  VIBEKIT_REQUIRE(a.numel() > 0, ShapeError, "mean_square of empty tensor");
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s / static_cast<double>(a.numel());
}

Tensor avg_pool2d(const Tensor& x, std::size_t factor) {
  const auto [h, w, c] = image_dims(x, "avg_pool2d");
  VIBEKIT_REQUIRE(factor >= 1 && h % factor == 0 && w % factor == 0, ShapeError,
                  "avg_pool2d: extents " + shape_str(x.shape()) + " not divisible by " + std::to_string(factor));
  const std::size_t oh = h / factor, ow = w / factor;
  Tensor out(image_shape(x, oh, ow));
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx)
            s += x[((oy * factor + dy) * w + (ox * factor + dx)) * c + ch];
        out[(oy * ow + ox) * c + ch] = s * inv;
      }
  return out;
}

Tensor nearest_upsample2d(const Tensor& x, std::size_t factor) {
  const auto [h, w, c] = image_dims(x, "nearest_upsample2d");
  VIBEKIT_REQUIRE(factor >= 1, ContractError, "nearest_upsample2d: factor must be >= 1");
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor out(image_shape(x, oh, ow));
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx)
      for (std::size_t ch = 0; ch < c; ++ch)
        out[(y * ow + xx) * c + ch] = x[((y / factor) * w + xx / factor) * c + ch];
  return out;
}

Tensor bilinear_upsample2d(const Tensor& x, std::size_t factor) {
  const auto [h, w, c] = image_dims(x, "bilinear_upsample2d");
  VIBEKIT_REQUIRE(factor >= 1, ContractError, "bilinear_upsample2d: factor must be >= 1");
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor out(image_shape(x, oh, ow));
  const double f = static_cast<double>(factor);
  auto source = [f](std::size_t o, std::size_t extent, std::size_t& i0, std::size_t& i1, double& frac) {
    double s = (static_cast<double>(o) + 0.5) / f - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, extent - 1);
    frac = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < oh; ++y) {
    std::size_t y0, y1;
    double fy;
    source(y, h, y0, y1, fy);
    for (std::size_t xx = 0; xx < ow; ++xx) {
      std::size_t x0, x1;
      double fx;
      source(xx, w, x0, x1, fx);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = (1 - fx) * x[(y0 * w + x0) * c + ch] + fx * x[(y0 * w + x1) * c + ch];
        const double bot = (1 - fx) * x[(y1 * w + x0) * c + ch] + fx * x[(y1 * w + x1) * c + ch];
        out[(y * ow + xx) * c + ch] = (1 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_grad(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double th = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

}  // namespace vibekit::ops
