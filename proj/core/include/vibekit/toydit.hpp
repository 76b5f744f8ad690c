// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vibekit/checkpoint.hpp"
#include "vibekit/flowmatch.hpp"
#include "vibekit/gclfa.hpp"
#include "vibekit/hfato.hpp"
#include "vibekit/relay_lora.hpp"
#include "vibekit/tape.hpp"

namespace vibekit::dit {

enum class AttentionMode { kDense, kGclfa };
AttentionMode parse_attention_mode(const std::string& name);

struct ModelConfig {
  std::size_t d = 16;
  std::size_t n_layers = 2;
  std::size_t ffn_mult = 2;
  double rope_base = 10000.0;
  /// Std-dev multiplier of the output projection at init.
  double out_init_scale = 0.1;
  /// Local window / pooling used when a forward pass runs in gclfa mode.
  gclfa::AttentionConfig gclfa{gclfa::WindowSpec{8, 8, true}, gclfa::CoarseSpec{2, true}, {}, 1};
};

/// Tiny single-channel DiT: one token per pixel, linear embedding plus a
/// sinusoidal time embedding, n_layers of (attention, GELU MLP) residual
/// blocks and a linear read-out. Per-layer weights are named
/// blocks.<l>.attn.{q,k,v,o} and blocks.<l>.ffn.{0,2}, all [d_out, d_in].
class ToyDiT {
 public:
  /// Provides the tape variable used for a named weight.
  using WeightFn = std::function<Var(Tape&, const std::string& name)>;

  ToyDiT(ModelConfig cfg, Checkpoint weights);
  static ToyDiT init(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const Checkpoint& weights() const { return weights_; }

  /// Predicted velocity for an [H, W] state; differentiable when `weight_fn` yields leaves.
  Var forward(Tape& tape, const Tensor& xt, double t, AttentionMode mode, const WeightFn& weight_fn = {}) const;
  Tensor forward(const Tensor& xt, double t, AttentionMode mode) const;
  flow::VelocityField field(AttentionMode mode) const;

  /// Full names of every weight matching the short target names (q, k, v, o, ffn.0, ffn.2).
  std::vector<std::string> expand_targets(const std::vector<std::string>& short_names) const;

 private:
  ModelConfig cfg_;
  Checkpoint weights_;
};

/// sin/cos features of t * 1000 at geometric frequencies, shape [1, d].
Tensor time_embedding(double t, std::size_t d);

/// Deterministic synthetic single-channel images: three low-frequency
/// sinusoids (the layout) plus high-frequency texture above the degradation
/// cutoff, clamped to [-1, 1].
struct DatasetConfig {
  std::uint64_t seed = 0;
  std::size_t h = 8;
  std::size_t w = 8;
  double texture_amplitude = 0.2;
};

class SyntheticDataset {
 public:
  explicit SyntheticDataset(DatasetConfig cfg) : cfg_(cfg) {}
  Tensor sample(std::uint64_t index) const;
  const DatasetConfig& config() const { return cfg_; }

 private:
  DatasetConfig cfg_;
};

enum class Objective { kFlowMatching, kHfato };
Objective parse_objective(const std::string& name);

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  Objective objective = Objective::kFlowMatching;
  std::vector<std::string> lora_targets{"q", "k", "v", "o", "ffn.0", "ffn.2"};
  std::size_t rank = 4;
  double alpha = 4.0;
  std::size_t steps = 500;
  std::size_t batch_size = 4;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  /// Training times are drawn uniformly from [t_min, t_max].
  double t_min = 0.02;
  double t_max = 0.98;
  flow::Weighting weighting = flow::Weighting::kConstant;
  hfato::DegradationConfig degradation;
  hfato::NoiseVariant variant = hfato::NoiseVariant::kInterpolated;
  AttentionMode attention = AttentionMode::kDense;
};

struct TrainResult {
  lora::AdapterSet adapters;
  std::vector<double> losses;  // one entry per optimizer step
};

/// Trains LoRA factors on the frozen model weights with Adam. Only adapter
/// parameters receive gradients; the model is never modified. The returned
/// factors are rounded to storage precision, so they equal what a VBCP export holds.
TrainResult train(const ToyDiT& model, const SyntheticDataset& data, const TrainConfig& cfg);

/// Loss of one batch under the training objective, for evaluation.
double objective_loss(const ToyDiT& model, const Tensor& x0, const Tensor& eps, double t, const TrainConfig& cfg);

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses);

struct CoarseToFineConfig {
  std::size_t low_h = 8;
  std::size_t low_w = 8;
  std::size_t upscale = 2;
  std::size_t steps = 50;
  double denoising_strength = 0.7;
  flow::OdeMethod method = flow::OdeMethod::kEuler;
};

struct CoarseToFineResult {
  Tensor low_res;
  Tensor upsampled;
  /// Re-noised state the refinement integrates from (equals `upsampled` when no refinement runs).
  Tensor refine_start;
  Tensor high_res;
};

/// Samples a low-res image with the base model, upsamples it, re-noises it
/// to t = denoising_strength and integrates back to 0 with base + LoRA2 in
/// gclfa attention. The refinement runs round(strength * steps) steps.
CoarseToFineResult coarse_to_fine_sample(const ModelConfig& model_cfg, const Checkpoint& base,
                                         const lora::AdapterSet& lora2, std::uint64_t prompt_seed,
                                         const CoarseToFineConfig& cfg);

}  // namespace vibekit::dit
