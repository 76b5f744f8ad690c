// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "vibekit/checkpoint.hpp"
#include "vibekit/relay_lora.hpp"
#include "vibekit/toydit.hpp"

namespace vibekit::relay {

struct RelayConfig {
  dit::ModelConfig model;
  std::uint64_t base_seed = 0;
  dit::DatasetConfig low_data{0, 8, 8, 0.2};
  dit::DatasetConfig high_data{0, 16, 16, 0.2};
  dit::TrainConfig stage1;  // fm objective, dense attention
  dit::TrainConfig stage2;  // hfato objective, gclfa attention
};

/// Stage presets: stage 1 trains with flow matching in dense attention,
/// stage 2 with the hfato objective in gclfa attention.
RelayConfig default_relay_config(std::uint64_t seed = 0);

struct RelayResult {
  Checkpoint base;    // W0
  Checkpoint merged;  // W1 = W0 + delta(LoRA1), frozen during stage 2
  lora::AdapterSet lora1;
  lora::AdapterSet lora2;
  std::vector<double> stage1_losses;
  std::vector<double> stage2_losses;
};

/// Stage 1 on low-res data against W0, merge into W1, stage 2 on high-res
/// data against W1. Only LoRA2 is meant for export.
RelayResult relay_protocol(const RelayConfig& cfg);
RelayResult relay_protocol(const RelayConfig& cfg, const Checkpoint& base);

}  // namespace vibekit::relay
