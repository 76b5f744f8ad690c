// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "vibekit/gclfa.hpp"
#include "vibekit/rng.hpp"

namespace {

using namespace vibekit;
using namespace vibekit::gclfa;

struct Inputs {
  TokenGrid q, k, v;
  AttentionConfig cfg;
};

Inputs make_inputs(std::size_t side, std::size_t win, std::size_t s, std::size_t d = 16) {
  Rng rng(side, win);
  auto grid = [&] { return TokenGrid::make(gaussian({side * side, d}, rng), side, side); };
  Inputs in{grid(), grid(), grid(), {}};
  in.cfg.window = {win, win, true};
  in.cfg.coarse = {s, true};
  return in;
}

void set_counters(benchmark::State& state, std::uint64_t maccs) {
  state.counters["maccs"] = static_cast<double>(maccs);
  state.counters["macc_rate"] = benchmark::Counter(static_cast<double>(maccs), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_Blocked(benchmark::State& state) {
  const auto in = make_inputs(state.range(0), state.range(1), 4);
  std::uint64_t maccs = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gclfa_attention(in.q, in.k, in.v, in.cfg, {1, &maccs}));
  set_counters(state, maccs);
}

void BM_BlockedThreads(benchmark::State& state) {
  const auto in = make_inputs(64, 16, 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(gclfa_attention(in.q, in.k, in.v, in.cfg, {static_cast<std::size_t>(state.range(0))}));
}

void BM_Reference(benchmark::State& state) {
  const auto in = make_inputs(state.range(0), state.range(1), 4);
  std::uint64_t maccs = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gclfa_reference(in.q, in.k, in.v, in.cfg, MaskSemantics::kAdditive, nullptr, &maccs));
  set_counters(state, maccs);
}

void BM_Full(benchmark::State& state) {
  const auto in = make_inputs(state.range(0), state.range(1), 4);
  std::uint64_t maccs = 0;
  for (auto _ : state) benchmark::DoNotOptimize(full_attention(in.q, in.k, in.v, in.cfg.rope, 1, &maccs));
  set_counters(state, maccs);
}

void BM_MaskStats(benchmark::State& state) {
  const std::size_t side = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(mask_stats({side, side}, {16, 16, true}, {4, true}, 16));
}

const std::vector<std::int64_t> kGrids{16, 32, 48, 64};

BENCHMARK(BM_Blocked)->ArgsProduct({kGrids, {8, 16}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Reference)->ArgsProduct({kGrids, {8, 16}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Full)->ArgsProduct({kGrids, {8}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BlockedThreads)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_MaskStats)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
