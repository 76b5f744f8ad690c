// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vibekit/error.hpp"
#include "vibekit/relay.hpp"
#include "vibekit/toydit.hpp"

namespace vibekit::cli {

/// Every problem found while loading a config, reported together.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct StageConfig {
  dit::Objective objective = dit::Objective::kFlowMatching;
  dit::AttentionMode attention = dit::AttentionMode::kDense;
  std::size_t steps = 500;
};

struct SamplerConfig {
  flow::OdeMethod method = flow::OdeMethod::kEuler;
  std::size_t steps = 50;
  double denoising_strength = 0.7;
  /// Recorded for completeness; the toy model has no conditioning.
  double guidance_scale = 5.0;
};

struct BenchConfig {
  std::vector<gclfa::GridDims> grids{{16, 16}, {32, 32}, {48, 48}, {64, 64}};
  gclfa::WindowSpec window{8, 8, true};
  std::size_t pool_ratio = 4;
  std::size_t d = 16;
  std::size_t repeats = 3;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;  // empty: not set
  dit::ModelConfig model;
  gclfa::GridDims low_res{8, 8};
  gclfa::GridDims high_res{16, 16};
  double texture_amplitude = 0.2;
  hfato::DegradationConfig degradation;
  hfato::NoiseVariant variant = hfato::NoiseVariant::kInterpolated;
  std::size_t lora_rank = 4;
  double lora_alpha = 4.0;
  std::vector<std::string> lora_targets{"q", "k", "v", "o", "ffn.0", "ffn.2"};
  dit::OptimizerConfig optimizer;
  std::size_t batch_size = 4;
  double t_min = 0.02;
  double t_max = 0.98;
  flow::Weighting weighting = flow::Weighting::kConstant;
  StageConfig stage1{dit::Objective::kFlowMatching, dit::AttentionMode::kDense, 500};
  StageConfig stage2{dit::Objective::kHfato, dit::AttentionMode::kGclfa, 500};
  SamplerConfig sampler;
  BenchConfig bench;
};

/// Parses and validates; unknown keys, wrong types and invalid values are
/// all collected into one ConfigError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
/// Checks the cross-module constraints of an already-parsed config.
std::vector<std::string> validate(const RunConfig& cfg);

/// Canonical JSON of every field (output_dir excluded).
nlohmann::json to_json(const RunConfig& cfg);
/// SHA-256 of the canonical JSON.
std::string config_hash(const RunConfig& cfg);

relay::RelayConfig to_relay_config(const RunConfig& cfg);
dit::TrainConfig stage_train_config(const RunConfig& cfg, int stage);
dit::DatasetConfig dataset_config(const RunConfig& cfg, int stage);
dit::CoarseToFineConfig coarse_to_fine_config(const RunConfig& cfg);

std::string to_string(dit::Objective o);
std::string to_string(dit::AttentionMode m);
std::string to_string(flow::OdeMethod m);
std::string to_string(flow::Weighting w);
std::string to_string(hfato::NoiseVariant v);

}  // namespace vibekit::cli
