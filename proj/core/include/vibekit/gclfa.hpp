// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <utility>

#include "vibekit/tape.hpp"
#include "vibekit/tensor.hpp"

// Global-coarse / local-fine attention over a 2-D token grid.
//
// Every query attends to (a) the fine keys inside its inward-shifted local
// window and (b) every pooled coarse key. The inward shift moves a window that
// would cross the grid border back inside, so all queries see exactly
// (w + 1) * (h + 1) local keys. Tokens are stored row-major: pos = y * W + x.
namespace vibekit::gclfa {

struct GridDims {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t tokens() const { return h * w; }
};

struct Coord {
  std::size_t x = 0;
  std::size_t y = 0;
};

/// A [h_tok * w_tok, d] token field.
struct TokenGrid {
  std::size_t h_tok = 0;
  std::size_t w_tok = 0;
  std::size_t d = 0;
  Tensor tokens;

  /// Validates extents; d must be divisible by 4 for the axial rotary split.
  static TokenGrid make(Tensor tokens, std::size_t h_tok, std::size_t w_tok);
  GridDims dims() const { return {h_tok, w_tok}; }
};

/// Native local window extents, both even. With `inward` off the window is
/// centred and simply clipped at the border.
struct WindowSpec {
  std::size_t w = 0;
  std::size_t h = 0;
  bool inward = true;
};

/// Pool ratio s: s = 2 gives a 1/2 downsample of the coarse branch, s = 4 a 1/4.
struct CoarseSpec {
  std::size_t pool_ratio = 2;
  bool enabled = true;
  std::size_t coarse_tokens(GridDims g) const {
    return enabled ? (g.h / pool_ratio) * (g.w / pool_ratio) : 0;
  }
};

/// Axial 2-D rotary embedding: channels [0, d/2) rotate with x, [d/2, d) with y;
/// pair i of a half uses frequency base^(-2i / (d/2)).
struct RoPEParams {
  double base = 10000.0;
};

/// How the 0/1 mask enters the logits. Additive (-inf on excluded keys) is the
/// working semantics; multiplicative scales logits by the mask, which leaves
/// excluded keys with weight e^0 and is kept only for comparison.
enum class MaskSemantics { kAdditive, kMultiplicative };

struct AttentionConfig {
  WindowSpec window;
  CoarseSpec coarse;
  RoPEParams rope;
  std::size_t heads = 1;
};

void validate(GridDims grid, const WindowSpec& win);
void validate(GridDims grid, const CoarseSpec& coarse);
void validate(GridDims grid, std::size_t d, const AttentionConfig& cfg);

/// max(win/2 - q, win/2 + q - extent + 1, 0).
std::size_t inward_offset(std::size_t q_coord, std::size_t extent, std::size_t win);

/// Inclusive key-coordinate range a query sees along one axis.
struct AxisRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
  std::size_t size() const { return hi - lo + 1; }
};
AxisRange local_range(std::size_t q_coord, std::size_t extent, std::size_t win, bool inward);

bool mask_contains(Coord q, Coord k, GridDims grid, const WindowSpec& win);

/// [N, N] matrix of 0/1 with M[q, k] = mask_contains(q, k).
Tensor build_dense_mask(GridDims grid, const WindowSpec& win);
/// [N, N + C] additive mask: 0 where visible, -inf where excluded. Coarse columns are always 0.
Tensor build_logmask(GridDims grid, const WindowSpec& win, const CoarseSpec& coarse);

/// Rotates one d-channel token in place for position (x, y).
void rotate_token(std::span<double> token, double x, double y, const RoPEParams& params);
TokenGrid apply_rope_2d(const TokenGrid& grid, const RoPEParams& params);
/// Differentiable rotary embedding of an [N, d] variable laid out on `grid`.
Var apply_rope_2d(Var tokens, GridDims grid, const RoPEParams& params);

/// s x s average pooling of K and V token grids; returns ([C, d], [C, d]).
std::pair<Tensor, Tensor> pool_kv(const TokenGrid& k, const TokenGrid& v, const CoarseSpec& spec);

/// softmax(q k^T / sqrt(d) + logmask) v, computed row by row over all columns.
/// When `weights` is non-null the [N, M] attention matrix is written there.
Tensor dense_masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& logmask,
                              Tensor* weights = nullptr, MaskSemantics semantics = MaskSemantics::kAdditive,
                              std::uint64_t* maccs = nullptr);

struct ExecOptions {
  std::size_t threads = 1;
  /// Receives the number of multiply-accumulates performed.
  std::uint64_t* maccs = nullptr;
};

/// Tile-blocked executor. Each query row shares one key-row range; each query
/// gathers its rectangular local window as contiguous key spans plus the coarse block.
Tensor gclfa_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v, const AttentionConfig& cfg,
                       const ExecOptions& opts = {});

/// Dense reference: materialised mask, explicit K/V concatenation, dense attention per head.
/// `weights`, when given, receives the per-head [N, N + C] attention matrices stacked on axis 0.
Tensor gclfa_reference(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v, const AttentionConfig& cfg,
                       MaskSemantics semantics = MaskSemantics::kAdditive, Tensor* weights = nullptr,
                       std::uint64_t* maccs = nullptr);

/// Plain full attention (rotary embedding, no mask, no coarse branch); counts MACs like the executor.
Tensor full_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v, const RoPEParams& rope,
                      std::size_t heads = 1, std::uint64_t* maccs = nullptr);

/// Differentiable attention used inside the model. With `cfg == nullptr` this is
/// full attention; otherwise the masked global-coarse/local-fine form.
Var attention_on_tape(Var q, Var k, Var v, GridDims grid, const RoPEParams& rope, const AttentionConfig* cfg);

struct MaskStats {
  std::map<std::size_t, std::size_t> keys_per_query;  // local-key count -> number of queries
  std::size_t local_keys = 0;   // (w + 1)(h + 1) for a uniform field, else the max count
  std::size_t coarse_keys = 0;  // N / s^2
  std::uint64_t flops_dense = 0;      // 2 N^2 d
  std::uint64_t flops_sparse = 0;     // 2 d sum_q (L_q + C)
  std::uint64_t flops_reference = 0;  // 2 N (N + C) d, the dense masked oracle
  double reduction = 0.0;             // flops_dense / flops_sparse
};

MaskStats mask_stats(GridDims grid, const WindowSpec& win, const CoarseSpec& coarse, std::size_t d);

}  // namespace vibekit::gclfa
