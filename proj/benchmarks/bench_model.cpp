// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "vibekit/hfato.hpp"
#include "vibekit/relay_lora.hpp"
#include "vibekit/rng.hpp"
#include "vibekit/tape.hpp"
#include "vibekit/toydit.hpp"

namespace {

using namespace vibekit;

void BM_Forward(benchmark::State& state) {
  const auto mode = state.range(1) ? dit::AttentionMode::kGclfa : dit::AttentionMode::kDense;
  const dit::ToyDiT model = dit::ToyDiT::init({}, 1);
  Rng rng(2);
  const std::size_t side = state.range(0);
  const Tensor x = gaussian({side, side}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x, 0.5, mode));
}
BENCHMARK(BM_Forward)->Args({8, 0})->Args({16, 0})->Args({16, 1})->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const dit::ToyDiT model = dit::ToyDiT::init({}, 1);
  Rng rng(3);
  const Tensor x = gaussian({16, 16}, rng);
  for (auto _ : state) {
    Tape tape;
    Var out = model.forward(tape, x, 0.5, dit::AttentionMode::kGclfa);
    benchmark::DoNotOptimize(out.value().numel());
  }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_MergeStrip(benchmark::State& state) {
  const dit::ToyDiT model = dit::ToyDiT::init({}, 4);
  Rng rng(5);
  lora::AdapterSet adapters;
  for (const auto& name : model.expand_targets({"q", "k", "v", "o"})) {
    const Tensor& w = model.weights().get(name);
    adapters.push_back(lora::init_adapter(name, w.dim(1), w.dim(0), state.range(0), state.range(0), rng));
  }
  for (auto _ : state) benchmark::DoNotOptimize(lora::strip(lora::merge(model.weights(), adapters), adapters));
}
BENCHMARK(BM_MergeStrip)->Arg(4)->Arg(16);

void BM_Degrade(benchmark::State& state) {
  Rng rng(6);
  const std::size_t side = state.range(0);
  const Tensor x = gaussian({side, side}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(hfato::degrade(x, {}));
}
BENCHMARK(BM_Degrade)->Arg(16)->Arg(64)->Arg(256);

void BM_HfEnergy(benchmark::State& state) {
  Rng rng(7);
  const std::size_t side = state.range(0);
  const Tensor x = gaussian({side, side}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(hfato::hf_energy(x));
}
BENCHMARK(BM_HfEnergy)->Arg(16)->Arg(256);

}  // namespace
