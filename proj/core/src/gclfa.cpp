// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/gclfa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <thread>
#include <vector>

#include "vibekit/autodiff.hpp"
#include "vibekit/error.hpp"
#include "vibekit/ops.hpp"

namespace vibekit::gclfa {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string dims_str(GridDims g) { return std::to_string(g.h) + "x" + std::to_string(g.w); }

// cos/sin of every rotation angle for an [N, head_dim] layout; index [n * (head_dim / 2) + pair].
struct RotaryTable {
  std::size_t pairs = 0;
  std::vector<double> cos;
  std::vector<double> sin;
};

RotaryTable rotary_table(GridDims grid, std::size_t head_dim, const RoPEParams& params) {
  VIBEKIT_REQUIRE(head_dim % 4 == 0, ContractError,
                  "rotary embedding needs a head dimension divisible by 4, got " + std::to_string(head_dim));
  const std::size_t half = head_dim / 2;
  const std::size_t quarter = head_dim / 4;
  RotaryTable t;
  t.pairs = half;
  t.cos.resize(grid.tokens() * half);
  t.sin.resize(grid.tokens() * half);
  for (std::size_t n = 0; n < grid.tokens(); ++n) {
    const double x = static_cast<double>(n % grid.w);
    const double y = static_cast<double>(n / grid.w);
    for (std::size_t p = 0; p < half; ++p) {
      const std::size_t i = p % quarter;
      const double freq = std::pow(params.base, -2.0 * static_cast<double>(i) / static_cast<double>(half));
      const double angle = (p < quarter ? x : y) * freq;
      t.cos[n * half + p] = std::cos(angle);
      t.sin[n * half + p] = std::sin(angle);
    }
  }
  return t;
}

// Rotates every head slice of an [N, heads * head_dim] tensor. sign = -1 applies the inverse.
void rotate_all(Tensor& x, const RotaryTable& table, std::size_t heads, double sign) {
  const std::size_t n_tok = x.dim(0);
  const std::size_t d = x.dim(1);
  const std::size_t head_dim = d / heads;
  for (std::size_t n = 0; n < n_tok; ++n) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* tok = x.raw() + n * d + h * head_dim;
      for (std::size_t p = 0; p < table.pairs; ++p) {
        const double c = table.cos[n * table.pairs + p];
        const double s = sign * table.sin[n * table.pairs + p];
        const double a = tok[2 * p];
        const double b = tok[2 * p + 1];
        tok[2 * p] = a * c - b * s;
        tok[2 * p + 1] = a * s + b * c;
      }
    }
  }
}

Tensor rope_heads(const Tensor& x, GridDims grid, std::size_t heads, const RoPEParams& params) {
  Tensor out = x;
  rotate_all(out, rotary_table(grid, x.dim(1) / heads, params), heads, 1.0);
  return out;
}

Tensor pool_tokens(const Tensor& tokens, GridDims grid, std::size_t s) {
  const std::size_t d = tokens.dim(1);
  Tensor img = tokens.reshaped({grid.h, grid.w, d});
  Tensor pooled = ops::avg_pool2d(img, s);
  return std::move(pooled).reshaped({(grid.h / s) * (grid.w / s), d});
}

Tensor head_slice(const Tensor& x, std::size_t head, std::size_t heads) {
  const std::size_t rows = x.dim(0);
  const std::size_t dh = x.dim(1) / heads;
  Tensor out({rows, dh});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.raw() + r * x.dim(1) + head * dh, dh, out.raw() + r * dh);
  return out;
}

void put_head_slice(Tensor& dst, const Tensor& src, std::size_t head, std::size_t heads) {
  const std::size_t dh = dst.dim(1) / heads;
  for (std::size_t r = 0; r < dst.dim(0); ++r)
    std::copy_n(src.raw() + r * dh, dh, dst.raw() + r * dst.dim(1) + head * dh);
}

void require_compatible(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v) {
  VIBEKIT_REQUIRE(q.h_tok == k.h_tok && q.w_tok == k.w_tok && q.h_tok == v.h_tok && q.w_tok == v.w_tok,
                  ShapeError, "attention: q, k, v grids differ");
  VIBEKIT_REQUIRE(q.d == k.d && k.d == v.d, ShapeError, "attention: q, k, v embedding widths differ");
}

// Runs fn(row_begin, row_end, slot) over [0, rows) split into `threads` contiguous blocks.
template <typename Fn>
void parallel_rows(std::size_t rows, std::size_t threads, Fn&& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(rows, 1));
  if (threads == 1) {
    fn(std::size_t{0}, rows, std::size_t{0});
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (rows + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t b = t * chunk;
    const std::size_t e = std::min(rows, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e, t] { fn(b, e, t); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

TokenGrid TokenGrid::make(Tensor tokens, std::size_t h_tok, std::size_t w_tok) {
  VIBEKIT_REQUIRE(h_tok > 0 && w_tok > 0, ShapeError, "TokenGrid: extents must be positive");
  VIBEKIT_REQUIRE(tokens.rank() == 2 && tokens.dim(0) == h_tok * w_tok, ShapeError,
                  "TokenGrid: expected [" + std::to_string(h_tok * w_tok) + ", d] tokens, got " +
                      shape_str(tokens.shape()));
  const std::size_t d = tokens.dim(1);
  VIBEKIT_REQUIRE(d % 4 == 0 && d > 0, ContractError,
                  "TokenGrid: embedding width must be a positive multiple of 4, got " + std::to_string(d));
  return TokenGrid{h_tok, w_tok, d, std::move(tokens)};
}

void validate(GridDims grid, const WindowSpec& win) {
  VIBEKIT_REQUIRE(grid.h > 0 && grid.w > 0, ContractError, "grid extents must be positive");
  VIBEKIT_REQUIRE(win.w >= 2 && win.h >= 2 && win.w % 2 == 0 && win.h % 2 == 0, ContractError,
                  "window extents must be even and >= 2, got " + std::to_string(win.h) + "x" + std::to_string(win.w));
  if (win.inward) {
    VIBEKIT_REQUIRE(win.w < grid.w && win.h < grid.h, ContractError,
                    "inward window " + std::to_string(win.h) + "x" + std::to_string(win.w) +
                        " must be smaller than grid " + dims_str(grid));
  }
}

void validate(GridDims grid, const CoarseSpec& coarse) {
  if (!coarse.enabled) return;
  VIBEKIT_REQUIRE(coarse.pool_ratio >= 1, ContractError, "pool ratio must be >= 1");
  VIBEKIT_REQUIRE(grid.h % coarse.pool_ratio == 0 && grid.w % coarse.pool_ratio == 0, ContractError,
                  "grid " + dims_str(grid) + " not divisible by pool ratio " + std::to_string(coarse.pool_ratio));
}

void validate(GridDims grid, std::size_t d, const AttentionConfig& cfg) {
  validate(grid, cfg.window);
  validate(grid, cfg.coarse);
  VIBEKIT_REQUIRE(cfg.heads >= 1 && d % cfg.heads == 0 && (d / cfg.heads) % 4 == 0, ContractError,
                  "embedding width " + std::to_string(d) + " must split into " + std::to_string(cfg.heads) +
                      " heads of a multiple of 4");
}

std::size_t inward_offset(std::size_t q_coord, std::size_t extent, std::size_t win) {
  VIBEKIT_REQUIRE(q_coord < extent, ContractError, "inward_offset: query outside grid");
  VIBEKIT_REQUIRE(win % 2 == 0, ContractError, "inward_offset: window must be even");
  VIBEKIT_REQUIRE(win < extent, ContractError, "inward_offset: window must be smaller than the grid");
  const auto half = static_cast<long long>(win / 2);
  const auto q = static_cast<long long>(q_coord);
  const auto e = static_cast<long long>(extent);
  return static_cast<std::size_t>(std::max({half - q, half + q - e + 1, 0LL}));
}

AxisRange local_range(std::size_t q_coord, std::size_t extent, std::size_t win, bool inward) {
  const std::size_t reach = win / 2 + (inward ? inward_offset(q_coord, extent, win) : 0);
  AxisRange r;
  r.lo = q_coord >= reach ? q_coord - reach : 0;
  r.hi = std::min(extent - 1, q_coord + reach);
  return r;
}

bool mask_contains(Coord q, Coord k, GridDims grid, const WindowSpec& win) {
  VIBEKIT_REQUIRE(q.x < grid.w && q.y < grid.h && k.x < grid.w && k.y < grid.h, ContractError,
                  "mask_contains: coordinate outside grid " + dims_str(grid));
  const std::size_t dw = win.inward ? inward_offset(q.x, grid.w, win.w) : 0;
  const std::size_t dh = win.inward ? inward_offset(q.y, grid.h, win.h) : 0;
  const std::size_t ax = q.x > k.x ? q.x - k.x : k.x - q.x;
  const std::size_t ay = q.y > k.y ? q.y - k.y : k.y - q.y;
  return ax <= win.w / 2 + dw && ay <= win.h / 2 + dh;
}

Tensor build_dense_mask(GridDims grid, const WindowSpec& win) {
  validate(grid, win);
  const std::size_t n = grid.tokens();
  Tensor m({n, n});
  for (std::size_t qi = 0; qi < n; ++qi) {
    const Coord q{qi % grid.w, qi / grid.w};
    for (std::size_t ki = 0; ki < n; ++ki) {
      const Coord k{ki % grid.w, ki / grid.w};
      m.at(qi, ki) = mask_contains(q, k, grid, win) ? 1.0 : 0.0;
    }
  }
  return m;
}

Tensor build_logmask(GridDims grid, const WindowSpec& win, const CoarseSpec& coarse) {
  validate(grid, coarse);
  const Tensor m = build_dense_mask(grid, win);
  const std::size_t n = grid.tokens();
  const std::size_t c = coarse.coarse_tokens(grid);
  Tensor out({n, n + c});
  for (std::size_t qi = 0; qi < n; ++qi)
    for (std::size_t ki = 0; ki < n; ++ki) out.at(qi, ki) = m.at(qi, ki) != 0.0 ? 0.0 : kNegInf;
  return out;
}

void rotate_token(std::span<double> token, double x, double y, const RoPEParams& params) {
  const std::size_t d = token.size();
  VIBEKIT_REQUIRE(d % 4 == 0, ContractError, "rotate_token: width must be divisible by 4");
  const std::size_t half = d / 2;
  const std::size_t quarter = d / 4;
  for (std::size_t p = 0; p < half; ++p) {
    const std::size_t i = p % quarter;
    const double freq = std::pow(params.base, -2.0 * static_cast<double>(i) / static_cast<double>(half));
    const double angle = (p < quarter ? x : y) * freq;
    const double c = std::cos(angle), s = std::sin(angle);
    const double a = token[2 * p], b = token[2 * p + 1];
    token[2 * p] = a * c - b * s;
    token[2 * p + 1] = a * s + b * c;
  }
}

TokenGrid apply_rope_2d(const TokenGrid& grid, const RoPEParams& params) {
  VIBEKIT_REQUIRE(grid.d % 4 == 0, ContractError, "apply_rope_2d: d must be divisible by 4");
  TokenGrid out = grid;
  out.tokens = rope_heads(grid.tokens, grid.dims(), 1, params);
  return out;
}

Var apply_rope_2d(Var tokens, GridDims grid, const RoPEParams& params) {
  const Tensor& x = tokens.value();
  VIBEKIT_REQUIRE(x.rank() == 2 && x.dim(0) == grid.tokens(), ShapeError,
                  "apply_rope_2d: tokens " + shape_str(x.shape()) + " do not match grid " + dims_str(grid));
  auto table = std::make_shared<RotaryTable>(rotary_table(grid, x.dim(1), params));
  Tensor out = x;
  rotate_all(out, *table, 1, 1.0);
  const auto id = tokens.id();
  return tokens.tape()->record(std::move(out), {id}, [id, table](Tape& tp, std::size_t n) {
    Tensor g = tp.upstream(n);
    rotate_all(g, *table, 1, -1.0);
    Tensor& acc = tp.grad_accumulator(id);
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
  });
}

std::pair<Tensor, Tensor> pool_kv(const TokenGrid& k, const TokenGrid& v, const CoarseSpec& spec) {
  VIBEKIT_REQUIRE(k.h_tok == v.h_tok && k.w_tok == v.w_tok && k.d == v.d, ShapeError, "pool_kv: K/V grids differ");
  VIBEKIT_REQUIRE(spec.pool_ratio >= 1, ContractError, "pool_kv: pool ratio must be >= 1");
  validate(k.dims(), spec);
  return {pool_tokens(k.tokens, k.dims(), spec.pool_ratio), pool_tokens(v.tokens, v.dims(), spec.pool_ratio)};
}

Tensor dense_masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& logmask,
                              Tensor* weights, MaskSemantics semantics, std::uint64_t* maccs) {
  VIBEKIT_REQUIRE(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, ShapeError, "attention operands must be matrices");
  const std::size_t n = q.dim(0), d = q.dim(1), m = k.dim(0), dv = v.dim(1);
  VIBEKIT_REQUIRE(k.dim(1) == d && v.dim(0) == m, ShapeError,
                  "attention: incompatible q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                      shape_str(v.shape()));
  VIBEKIT_REQUIRE(logmask.rank() == 2 && logmask.dim(0) == n && logmask.dim(1) == m, ShapeError,
                  "attention: mask " + shape_str(logmask.shape()) + " does not match scores [" + std::to_string(n) +
                      "x" + std::to_string(m) + "]");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor out({n, dv});
  if (weights) *weights = Tensor({n, m});
  std::vector<double> row(m);
  std::uint64_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* qi = q.raw() + i * d;
    double mx = kNegInf;
    for (std::size_t j = 0; j < m; ++j) {
      const double* kj = k.raw() + j * d;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += qi[c] * kj[c];
      count += d;
      const double mask = logmask.at(i, j);
      if (semantics == MaskSemantics::kAdditive) {
        row[j] = dot * inv_sqrt_d + mask;
      } else {
        // Multiplicative: a 0/1 mask scales the logit; any -inf entry is read as 0.
        row[j] = dot * (mask == 0.0 ? 1.0 : 0.0) * inv_sqrt_d;
      }
      mx = std::max(mx, row[j]);
    }
    VIBEKIT_REQUIRE(mx != kNegInf, NumericError, "empty attention row " + std::to_string(i));
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    double* oi = out.raw() + i * dv;
    for (std::size_t j = 0; j < m; ++j) {
      const double p = row[j] / z;
      if (weights) weights->at(i, j) = p;
      const double* vj = v.raw() + j * dv;
      for (std::size_t c = 0; c < dv; ++c) oi[c] += p * vj[c];
      count += dv;
    }
  }
  if (maccs) *maccs = count;
  return out;
}

Tensor gclfa_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v, const AttentionConfig& cfg,
                       const ExecOptions& opts) {
  require_compatible(q, k, v);
  const GridDims grid = q.dims();
  validate(grid, q.d, cfg);

  const std::size_t n = grid.tokens();
  const std::size_t d = q.d;
  const std::size_t heads = cfg.heads;
  const std::size_t dh = d / heads;
  const Tensor qr = rope_heads(q.tokens, grid, heads, cfg.rope);
  const Tensor kr = rope_heads(k.tokens, grid, heads, cfg.rope);
  Tensor kc, vc;
  const std::size_t n_coarse = cfg.coarse.coarse_tokens(grid);
  if (n_coarse > 0) {
    kc = pool_tokens(kr, grid, cfg.coarse.pool_ratio);
    vc = pool_tokens(v.tokens, grid, cfg.coarse.pool_ratio);
  }

  // Per-axis key ranges; every query in a grid row shares the y range.
  std::vector<AxisRange> xr(grid.w), yr(grid.h);
  for (std::size_t x = 0; x < grid.w; ++x) xr[x] = local_range(x, grid.w, cfg.window.w, cfg.window.inward);
  for (std::size_t y = 0; y < grid.h; ++y) yr[y] = local_range(y, grid.h, cfg.window.h, cfg.window.inward);
  std::size_t max_local = 0;
  for (const auto& a : xr)
    for (const auto& b : yr) max_local = std::max(max_local, a.size() * b.size());

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({n, d});
  std::vector<std::uint64_t> counts(std::max<std::size_t>(opts.threads, 1), 0);

  parallel_rows(grid.h, opts.threads, [&](std::size_t y_begin, std::size_t y_end, std::size_t slot) {
    std::vector<double> scores(max_local + n_coarse);
    std::uint64_t local_count = 0;
    for (std::size_t qy = y_begin; qy < y_end; ++qy) {
      const AxisRange ry = yr[qy];
      for (std::size_t qx = 0; qx < grid.w; ++qx) {
        const AxisRange rx = xr[qx];
        const std::size_t qi = qy * grid.w + qx;
        const std::size_t n_local = rx.size() * ry.size();
        const std::size_t n_keys = n_local + n_coarse;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          const double* qv = qr.raw() + qi * d + off;
          double mx = kNegInf;
          std::size_t s = 0;
          for (std::size_t ky = ry.lo; ky <= ry.hi; ++ky) {
            const double* krow = kr.raw() + (ky * grid.w) * d + off;
            for (std::size_t kx = rx.lo; kx <= rx.hi; ++kx) {
              const double* kv = krow + kx * d;
              double dot = 0.0;
              for (std::size_t c = 0; c < dh; ++c) dot += qv[c] * kv[c];
              local_count += dh;
              scores[s] = dot * inv_sqrt_d;
              mx = std::max(mx, scores[s]);
              ++s;
            }
          }
          for (std::size_t j = 0; j < n_coarse; ++j) {
            const double* kv = kc.raw() + j * d + off;
            double dot = 0.0;
            for (std::size_t c = 0; c < dh; ++c) dot += qv[c] * kv[c];
            local_count += dh;
            scores[s] = dot * inv_sqrt_d;
            mx = std::max(mx, scores[s]);
            ++s;
          }
          double z = 0.0;
          for (std::size_t j = 0; j < n_keys; ++j) {
            scores[j] = std::exp(scores[j] - mx);
            z += scores[j];
          }
          const double inv_z = 1.0 / z;
          double* o = out.raw() + qi * d + off;
          s = 0;
          for (std::size_t ky = ry.lo; ky <= ry.hi; ++ky) {
            const double* vrow = v.tokens.raw() + (ky * grid.w) * d + off;
            for (std::size_t kx = rx.lo; kx <= rx.hi; ++kx) {
              const double p = scores[s++] * inv_z;
              const double* vv = vrow + kx * d;
              for (std::size_t c = 0; c < dh; ++c) o[c] += p * vv[c];
              local_count += dh;
            }
          }
          for (std::size_t j = 0; j < n_coarse; ++j) {
            const double p = scores[s++] * inv_z;
            const double* vv = vc.raw() + j * d + off;
            for (std::size_t c = 0; c < dh; ++c) o[c] += p * vv[c];
            local_count += dh;
          }
        }
      }
    }
    counts[slot] += local_count;
  });

  if (opts.maccs) {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    *opts.maccs = total;
  }
  return out;
}

Tensor gclfa_reference(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v, const AttentionConfig& cfg,
                       MaskSemantics semantics, Tensor* weights, std::uint64_t* maccs) {
  require_compatible(q, k, v);
  const GridDims grid = q.dims();
  validate(grid, q.d, cfg);
  const std::size_t heads = cfg.heads;

  const Tensor qr = rope_heads(q.tokens, grid, heads, cfg.rope);
  const Tensor kr = rope_heads(k.tokens, grid, heads, cfg.rope);
  Tensor k_all = kr;
  Tensor v_all = v.tokens;
  if (cfg.coarse.coarse_tokens(grid) > 0) {
    k_all = ops::concat(kr, pool_tokens(kr, grid, cfg.coarse.pool_ratio), 0);
    v_all = ops::concat(v.tokens, pool_tokens(v.tokens, grid, cfg.coarse.pool_ratio), 0);
  }
  const Tensor logmask = build_logmask(grid, cfg.window, cfg.coarse);

  Tensor out({grid.tokens(), q.d});
  Tensor stacked;
  std::uint64_t count = 0;
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor w;
    std::uint64_t head_count = 0;
    Tensor oh = dense_masked_attention(head_slice(qr, h, heads), head_slice(k_all, h, heads),
                                       head_slice(v_all, h, heads), logmask, weights ? &w : nullptr, semantics,
                                       &head_count);
    count += head_count;
    put_head_slice(out, oh, h, heads);
    if (weights) stacked = h == 0 ? std::move(w) : ops::concat(stacked, w, 0);
  }
  if (weights) *weights = std::move(stacked);
  if (maccs) *maccs = count;
  return out;
}

Tensor full_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v, const RoPEParams& rope,
                      std::size_t heads, std::uint64_t* maccs) {
  require_compatible(q, k, v);
  const GridDims grid = q.dims();
  VIBEKIT_REQUIRE(heads >= 1 && q.d % heads == 0 && (q.d / heads) % 4 == 0, ContractError,
                  "full_attention: width does not split into heads of a multiple of 4");
  const std::size_t n = grid.tokens();
  const std::size_t d = q.d;
  const std::size_t dh = d / heads;
  const Tensor qr = rope_heads(q.tokens, grid, heads, rope);
  const Tensor kr = rope_heads(k.tokens, grid, heads, rope);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({n, d});
  std::vector<double> scores(n);
  std::uint64_t count = 0;
  for (std::size_t qi = 0; qi < n; ++qi) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      const double* qv = qr.raw() + qi * d + off;
      double mx = kNegInf;
      for (std::size_t j = 0; j < n; ++j) {
        const double* kv = kr.raw() + j * d + off;
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += qv[c] * kv[c];
        count += dh;
        scores[j] = dot * inv_sqrt_d;
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      const double inv_z = 1.0 / z;
      double* o = out.raw() + qi * d + off;
      for (std::size_t j = 0; j < n; ++j) {
        const double p = scores[j] * inv_z;
        const double* vv = v.tokens.raw() + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) o[c] += p * vv[c];
        count += dh;
      }
    }
  }
  if (maccs) *maccs = count;
  return out;
}

Var attention_on_tape(Var q, Var k, Var v, GridDims grid, const RoPEParams& rope, const AttentionConfig* cfg) {
  Tape& tape = *q.tape();
  const std::size_t d = q.value().dim(1);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Var qr = apply_rope_2d(q, grid, rope);
  Var kr = apply_rope_2d(k, grid, rope);
  if (cfg == nullptr) {
    Var scores = ad::scale(ad::matmul(qr, ad::transpose(kr)), inv_sqrt_d);
    return ad::matmul(ad::softmax_lastdim(scores), v);
  }
  validate(grid, d, *cfg);
  VIBEKIT_REQUIRE(cfg->heads == 1, ContractError, "attention_on_tape: only single-head attention is differentiable");
  Var k_all = kr;
  Var v_all = v;
  if (cfg->coarse.coarse_tokens(grid) > 0) {
    const std::size_t s = cfg->coarse.pool_ratio;
    const std::size_t c = cfg->coarse.coarse_tokens(grid);
    Var kc = ad::reshape(ad::avg_pool2d(ad::reshape(kr, {grid.h, grid.w, d}), s), {c, d});
    Var vc = ad::reshape(ad::avg_pool2d(ad::reshape(v, {grid.h, grid.w, v.value().dim(1)}), s),
                         {c, v.value().dim(1)});
    k_all = ad::concat_rows(kr, kc);
    v_all = ad::concat_rows(v, vc);
  }
  Var logmask = tape.constant(build_logmask(grid, cfg->window, cfg->coarse));
  Var scores = ad::add(ad::scale(ad::matmul(qr, ad::transpose(k_all)), inv_sqrt_d), logmask);
  return ad::matmul(ad::softmax_lastdim(scores), v_all);
}

MaskStats mask_stats(GridDims grid, const WindowSpec& win, const CoarseSpec& coarse, std::size_t d) {
  validate(grid, win);
  validate(grid, coarse);
  MaskStats st;
  const std::uint64_t n = grid.tokens();
  st.coarse_keys = coarse.coarse_tokens(grid);
  std::uint64_t total_local = 0;
  for (std::size_t y = 0; y < grid.h; ++y) {
    const std::size_t ny = local_range(y, grid.h, win.h, win.inward).size();
    for (std::size_t x = 0; x < grid.w; ++x) {
      const std::size_t count = ny * local_range(x, grid.w, win.w, win.inward).size();
      ++st.keys_per_query[count];
      total_local += count;
      st.local_keys = std::max(st.local_keys, count);
    }
  }
  st.flops_dense = 2 * n * n * d;
  st.flops_sparse = 2 * d * (total_local + n * st.coarse_keys);
  st.flops_reference = 2 * n * (n + st.coarse_keys) * d;
  st.reduction = static_cast<double>(st.flops_dense) / static_cast<double>(st.flops_sparse);
  return st;
}

}  // namespace vibekit::gclfa
