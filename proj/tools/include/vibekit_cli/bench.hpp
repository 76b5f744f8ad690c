// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vibekit/gclfa.hpp"

namespace vibekit::cli {

struct BenchSpec {
  std::vector<gclfa::GridDims> grids;
  gclfa::WindowSpec window{8, 8, true};
  std::size_t pool_ratio = 4;
  std::size_t d = 16;
  std::size_t threads = 1;
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
};

/// One executor at one sweep point. Executors: "reference" (dense masked
/// oracle), "blocked" (tile executor), "full" (unmasked attention; it
/// computes a different function, so it has no error column).
struct BenchRow {
  gclfa::GridDims grid;
  gclfa::WindowSpec window;
  std::size_t pool_ratio = 0;
  std::size_t d = 0;
  std::string executor;
  std::size_t threads = 1;
  double wall_time_s = 0.0;  // best of the repeats
  std::uint64_t maccs = 0;
  std::uint64_t maccs_analytic = 0;
  std::optional<double> max_abs_err_vs_oracle;
};

std::vector<BenchRow> bench_attn(const BenchSpec& spec);

inline constexpr const char* kBenchCsvHeader =
    "grid_h,grid_w,win_h,win_w,s,d,executor,threads,wall_time_s,maccs,maccs_analytic,max_abs_err_vs_oracle";
std::string bench_csv(const std::vector<BenchRow>& rows);

/// Shortest round-trip decimal form, independent of the C locale.
std::string format_double(double v);

}  // namespace vibekit::cli
