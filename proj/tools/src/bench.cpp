// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit_cli/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <limits>

#include "vibekit/rng.hpp"

namespace vibekit::cli {
namespace {

template <typename Fn>
double best_time(std::size_t repeats, Fn&& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    best = std::min(best, dt.count());
  }
  return best;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<BenchRow> bench_attn(const BenchSpec& spec) {
  std::vector<BenchRow> rows;
  for (std::size_t i = 0; i < spec.grids.size(); ++i) {
    const gclfa::GridDims grid = spec.grids[i];
    gclfa::AttentionConfig cfg;
    cfg.window = spec.window;
    cfg.coarse = {spec.pool_ratio, true};
    cfg.heads = 1;
    gclfa::validate(grid, spec.d, cfg);
    const gclfa::MaskStats stats = gclfa::mask_stats(grid, spec.window, cfg.coarse, spec.d);

    Rng rng(spec.seed, i);
    const auto make = [&] { return gclfa::TokenGrid::make(gaussian({grid.tokens(), spec.d}, rng), grid.h, grid.w); };
    const gclfa::TokenGrid q = make(), k = make(), v = make();

    Tensor ref, blocked;
    std::uint64_t ref_maccs = 0, blocked_maccs = 0, full_maccs = 0;
    const double t_ref = best_time(spec.repeats, [&] {
      ref = gclfa::gclfa_reference(q, k, v, cfg, gclfa::MaskSemantics::kAdditive, nullptr, &ref_maccs);
    });
    const double t_blocked = best_time(spec.repeats, [&] {
      blocked = gclfa::gclfa_attention(q, k, v, cfg, {spec.threads, &blocked_maccs});
    });
    const double t_full = best_time(spec.repeats, [&] {
      (void)gclfa::full_attention(q, k, v, cfg.rope, 1, &full_maccs);
    });

    BenchRow base;
    base.grid = grid;
    base.window = spec.window;
    base.pool_ratio = spec.pool_ratio;
    base.d = spec.d;

    BenchRow r = base;
    r.executor = "reference";
    r.wall_time_s = t_ref;
    r.maccs = ref_maccs;
    r.maccs_analytic = stats.flops_reference;
    r.max_abs_err_vs_oracle = 0.0;
    rows.push_back(r);

    r = base;
    r.executor = "blocked";
    r.threads = spec.threads;
    r.wall_time_s = t_blocked;
    r.maccs = blocked_maccs;
    r.maccs_analytic = stats.flops_sparse;
    r.max_abs_err_vs_oracle = max_abs_diff(blocked, ref);
    rows.push_back(r);

    r = base;
    r.executor = "full";
    r.wall_time_s = t_full;
    r.maccs = full_maccs;
    r.maccs_analytic = stats.flops_dense;
    rows.push_back(r);
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = std::string(kBenchCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.grid.h) + "," + std::to_string(r.grid.w) + "," + std::to_string(r.window.h) + "," +
           std::to_string(r.window.w) + "," + std::to_string(r.pool_ratio) + "," + std::to_string(r.d) + "," +
           r.executor + "," + std::to_string(r.threads) + "," + format_double(r.wall_time_s) + "," +
           std::to_string(r.maccs) + "," + std::to_string(r.maccs_analytic) + "," +
           (r.max_abs_err_vs_oracle ? format_double(*r.max_abs_err_vs_oracle) : "") + "\n";
  }
  return out;
}

}  // namespace vibekit::cli
