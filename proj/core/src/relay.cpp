// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/relay.hpp"

namespace vibekit::relay {

RelayConfig default_relay_config(std::uint64_t seed) {
  RelayConfig cfg;
  cfg.base_seed = seed;
  cfg.low_data.seed = seed;
  cfg.high_data.seed = seed + 1;
  cfg.stage1.objective = dit::Objective::kFlowMatching;
  cfg.stage1.attention = dit::AttentionMode::kDense;
  cfg.stage1.seed = seed;
  cfg.stage2.objective = dit::Objective::kHfato;
  cfg.stage2.attention = dit::AttentionMode::kGclfa;
  cfg.stage2.seed = seed + 1;
  return cfg;
}

RelayResult relay_protocol(const RelayConfig& cfg) {
  return relay_protocol(cfg, dit::ToyDiT::init(cfg.model, cfg.base_seed).weights());
}

RelayResult relay_protocol(const RelayConfig& cfg, const Checkpoint& base) {
  RelayResult r;
  r.base = base;
  const dit::ToyDiT w0(cfg.model, base);
  dit::TrainResult s1 = dit::train(w0, dit::SyntheticDataset(cfg.low_data), cfg.stage1);
  r.lora1 = std::move(s1.adapters);
  r.stage1_losses = std::move(s1.losses);

  r.merged = lora::merge(base, r.lora1);
  const dit::ToyDiT w1(cfg.model, r.merged);
  dit::TrainResult s2 = dit::train(w1, dit::SyntheticDataset(cfg.high_data), cfg.stage2);
  r.lora2 = std::move(s2.adapters);
  r.stage2_losses = std::move(s2.losses);
  return r;
}

}  // namespace vibekit::relay
