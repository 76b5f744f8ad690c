// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/toydit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include "vibekit/autodiff.hpp"
#include "vibekit/error.hpp"
#include "vibekit/ops.hpp"
#include "vibekit/rng.hpp"

namespace vibekit::dit {

namespace {

// Rng stream ids; fixed so that runs are reproducible from a seed alone.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamAdapters = 2;
constexpr std::uint64_t kStreamBatches = 3;
constexpr std::uint64_t kStreamLowNoise = 4;
constexpr std::uint64_t kStreamRefineNoise = 5;

const std::vector<std::string> kAttnNames{"q", "k", "v", "o"};

std::string block_name(std::size_t layer, const std::string& leaf) {
  const bool ffn = leaf.rfind("ffn.", 0) == 0;
  return "blocks." + std::to_string(layer) + (ffn ? "." : ".attn.") + leaf;
}

Var linear(Var x, Var w) { return ad::matmul(x, ad::transpose(w)); }

}  // namespace

AttentionMode parse_attention_mode(const std::string& name) {
  if (name == "dense") return AttentionMode::kDense;
  if (name == "gclfa") return AttentionMode::kGclfa;
  throw ContractError("unknown attention mode '" + name + "' (expected dense|gclfa)");
}

Objective parse_objective(const std::string& name) {
  if (name == "fm") return Objective::kFlowMatching;
  if (name == "hfato") return Objective::kHfato;
  throw ContractError("unknown objective '" + name + "' (expected fm|hfato)");
}

Tensor time_embedding(double t, std::size_t d) {
  Tensor out({1, d});
  const std::size_t half = d / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(1000.0 * t * freq);
    out[half + i] = std::cos(1000.0 * t * freq);
  }
  return out;
}

ToyDiT::ToyDiT(ModelConfig cfg, Checkpoint weights) : cfg_(std::move(cfg)), weights_(std::move(weights)) {
  VIBEKIT_REQUIRE(cfg_.d % 4 == 0 && cfg_.d > 0, ContractError, "model width must be a positive multiple of 4");
  VIBEKIT_REQUIRE(cfg_.n_layers >= 1 && cfg_.ffn_mult >= 1, ContractError, "model needs >= 1 layer and ffn_mult >= 1");
  const std::size_t d = cfg_.d;
  const std::size_t dff = d * cfg_.ffn_mult;
  auto expect = [this](const std::string& name, Shape shape) {
    VIBEKIT_REQUIRE(weights_.contains(name), ContractError, "model weights lack '" + name + "'");
    VIBEKIT_REQUIRE(weights_.get(name).shape() == shape, ShapeError,
                    "weight '" + name + "' has shape " + shape_str(weights_.get(name).shape()) + ", expected " +
                        shape_str(shape));
  };
  expect("embed.in", {d, 1});
  expect("embed.out", {1, d});
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    for (const auto& n : kAttnNames) expect(block_name(l, n), {d, d});
    expect(block_name(l, "ffn.0"), {dff, d});
    expect(block_name(l, "ffn.2"), {d, dff});
  }
}

ToyDiT ToyDiT::init(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed, kStreamInit);
  const std::size_t d = cfg.d;
  const std::size_t dff = d * cfg.ffn_mult;
  const double sd = static_cast<double>(d);
  Checkpoint w;
  w.metadata()["stage"] = "base";
  w.set("embed.in", to_storage_precision(gaussian({d, 1}, rng, 1.0)));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    for (const auto& n : kAttnNames) w.set(block_name(l, n), to_storage_precision(gaussian({d, d}, rng, 1.0 / std::sqrt(sd))));
    w.set(block_name(l, "ffn.0"), to_storage_precision(gaussian({dff, d}, rng, 1.0 / std::sqrt(sd))));
    w.set(block_name(l, "ffn.2"),
          to_storage_precision(gaussian({d, dff}, rng, 1.0 / std::sqrt(static_cast<double>(dff)))));
  }
  w.set("embed.out", to_storage_precision(gaussian({1, d}, rng, cfg.out_init_scale / std::sqrt(sd))));
  return ToyDiT(cfg, std::move(w));
}

Var ToyDiT::forward(Tape& tape, const Tensor& xt, double t, AttentionMode mode, const WeightFn& weight_fn) const {
  VIBEKIT_REQUIRE(xt.rank() == 2, ShapeError, "forward: expected an [H, W] state, got " + shape_str(xt.shape()));
  VIBEKIT_REQUIRE(t >= 0.0 && t <= 1.0, ContractError, "forward: t must lie in [0, 1]");
  const gclfa::GridDims grid{xt.dim(0), xt.dim(1)};
  const std::size_t n = grid.tokens();
  auto weight = [&](const std::string& name) -> Var {
    if (weight_fn) return weight_fn(tape, name);
    return tape.constant(weights_.get(name));
  };
  const gclfa::RoPEParams rope{cfg_.rope_base};
  const gclfa::AttentionConfig* attn_cfg = mode == AttentionMode::kGclfa ? &cfg_.gclfa : nullptr;

  Var x = tape.constant(xt.reshaped({n, 1}));
  Var h = ad::add_row(linear(x, weight("embed.in")), tape.constant(time_embedding(t, cfg_.d)));
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    Var q = linear(h, weight(block_name(l, "q")));
    Var k = linear(h, weight(block_name(l, "k")));
    Var v = linear(h, weight(block_name(l, "v")));
    Var a = gclfa::attention_on_tape(q, k, v, grid, rope, attn_cfg);
    h = ad::add(h, linear(a, weight(block_name(l, "o"))));
    Var f = linear(ad::gelu(linear(h, weight(block_name(l, "ffn.0")))), weight(block_name(l, "ffn.2")));
    h = ad::add(h, f);
  }
  return ad::reshape(linear(h, weight("embed.out")), xt.shape());
}

Tensor ToyDiT::forward(const Tensor& xt, double t, AttentionMode mode) const {
  Tape tape;
  return forward(tape, xt, t, mode).value();
}

flow::VelocityField ToyDiT::field(AttentionMode mode) const {
  return [this, mode](const Tensor& x, double t) { return forward(x, t, mode); };
}

std::vector<std::string> ToyDiT::expand_targets(const std::vector<std::string>& short_names) const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    for (const auto& s : short_names) {
      VIBEKIT_REQUIRE(s == "q" || s == "k" || s == "v" || s == "o" || s == "ffn.0" || s == "ffn.2", ContractError,
                      "unknown LoRA target '" + s + "' (expected q, k, v, o, ffn.0, ffn.2)");
      out.push_back(block_name(l, s));
    }
  }
  return out;
}

Tensor SyntheticDataset::sample(std::uint64_t index) const {
  Rng rng(cfg_.seed, index);
  const std::size_t h = cfg_.h, w = cfg_.w;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  struct Wave {
    double amp, fx, fy, phase;
  };
  std::vector<Wave> layout, texture;
  for (int i = 0; i < 3; ++i)  // cycles per image
    layout.push_back({rng.uniform(0.25, 0.45), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(0.0, two_pi)});
  for (int i = 0; i < 2; ++i) {  // cycles per pixel, above the 1/4 cutoff of a factor-2 degradation
    const double sx = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double sy = rng.uniform() < 0.5 ? -1.0 : 1.0;
    texture.push_back({0.5 * cfg_.texture_amplitude, sx * rng.uniform(0.3, 0.5), sy * rng.uniform(0.3, 0.5),
                       rng.uniform(0.0, two_pi)});
  }

  Tensor img({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
      double val = 0.0;
      for (const auto& wv : layout) val += wv.amp * std::sin(two_pi * (wv.fx * u + wv.fy * v) + wv.phase);
      for (const auto& wv : texture)
        val += wv.amp * std::sin(two_pi * (wv.fx * static_cast<double>(x) + wv.fy * static_cast<double>(y)) + wv.phase);
      img.at(y, x) = std::clamp(val, -1.0, 1.0);
    }
  return img;
}

namespace {

struct AdamSlot {
  Tensor m, v;
};

void adam_update(Tensor& param, const Tensor& grad, AdamSlot& slot, const OptimizerConfig& opt, std::size_t step) {
  if (slot.m.numel() == 0) {
    slot.m = Tensor(param.shape());
    slot.v = Tensor(param.shape());
  }
  const double b1t = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double b2t = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.numel(); ++i) {
    slot.m[i] = opt.beta1 * slot.m[i] + (1.0 - opt.beta1) * grad[i];
    slot.v[i] = opt.beta2 * slot.v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
    const double mhat = slot.m[i] / b1t;
    const double vhat = slot.v[i] / b2t;
    param[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
  }
}

// Scalar loss of one sample recorded on `tape`.
Var sample_loss(Tape& tape, const ToyDiT& model, const Tensor& x0, const Tensor& eps, double t,
                const TrainConfig& cfg, const ToyDiT::WeightFn& weight_fn) {
  if (cfg.objective == Objective::kFlowMatching) {
    const flow::FlowBatch b = flow::make_batch(x0, eps, t);
    Var v = model.forward(tape, b.xt, t, cfg.attention, weight_fn);
    return flow::fm_loss(v, b.v_target, flow::loss_weight(cfg.weighting, t));
  }
  const hfato::HFATOBatch b = hfato::hfato_forward(x0, eps, t, cfg.degradation, cfg.variant);
  Var v = model.forward(tape, b.xt, t, cfg.attention, weight_fn);
  return hfato::hfato_loss(hfato::reconstruct_x0(b.xt, v, t), x0);
}

}  // namespace

double objective_loss(const ToyDiT& model, const Tensor& x0, const Tensor& eps, double t, const TrainConfig& cfg) {
  Tape tape;
  return sample_loss(tape, model, x0, eps, t, cfg, {}).value()[0];
}

TrainResult train(const ToyDiT& model, const SyntheticDataset& data, const TrainConfig& cfg) {
  const std::vector<std::string> targets = model.expand_targets(cfg.lora_targets);
  VIBEKIT_REQUIRE(!targets.empty(), ContractError, "no trainable parameters: LoRA target list is empty");
  VIBEKIT_REQUIRE(cfg.batch_size >= 1, ContractError, "batch_size must be >= 1");
  VIBEKIT_REQUIRE(cfg.t_min >= 0.0 && cfg.t_min <= cfg.t_max && cfg.t_max <= 1.0, ContractError,
                  "training time range must satisfy 0 <= t_min <= t_max <= 1");

  TrainResult result;
  Rng init_rng(cfg.seed, kStreamAdapters);
  std::map<std::string, std::size_t> slot_of;
  for (const auto& name : targets) {
    const Tensor& w = model.weights().get(name);
    slot_of[name] = result.adapters.size();
    result.adapters.push_back(lora::init_adapter(name, w.dim(1), w.dim(0), cfg.rank, cfg.alpha, init_rng));
  }
  std::vector<AdamSlot> adam_a(targets.size()), adam_b(targets.size());

  Rng batch_rng(cfg.seed, kStreamBatches);
  const Shape shape{data.config().h, data.config().w};
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Tape tape;
    std::vector<Var> a_vars(targets.size()), b_vars(targets.size());
    std::map<std::string, Var> effective;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& ad_i = result.adapters[i];
      a_vars[i] = tape.leaf(ad_i.A);
      b_vars[i] = tape.leaf(ad_i.B);
      Var delta = ad::scale(ad::matmul(b_vars[i], a_vars[i]), ad_i.scale());
      effective[targets[i]] = ad::add(tape.constant(model.weights().get(targets[i])), delta);
    }
    ToyDiT::WeightFn weight_fn = [&](Tape& tp, const std::string& name) -> Var {
      auto it = effective.find(name);
      return it != effective.end() ? it->second : tp.constant(model.weights().get(name));
    };

    const std::string diverged = "training diverged at step " + std::to_string(step);
    Var total;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const Tensor x0 = data.sample(step * cfg.batch_size + b);
      const Tensor eps = gaussian(shape, batch_rng);
      const double t = batch_rng.uniform(cfg.t_min, cfg.t_max);
      Var l;
      try {
        l = sample_loss(tape, model, x0, eps, t, cfg, weight_fn);
      } catch (const NumericError& e) {
        throw NumericError(diverged + ": " + e.what());
      }
      total = b == 0 ? l : ad::add(total, l);
    }
    Var loss = ad::scale(total, 1.0 / static_cast<double>(cfg.batch_size));
    const double value = loss.value()[0];
    VIBEKIT_REQUIRE(std::isfinite(value), NumericError, diverged + " (loss " + std::to_string(value) + ")");
    result.losses.push_back(value);

    tape.backward(loss);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      adam_update(result.adapters[i].A, tape.grad(a_vars[i]), adam_a[i], cfg.optimizer, step + 1);
      adam_update(result.adapters[i].B, tape.grad(b_vars[i]), adam_b[i], cfg.optimizer, step + 1);
    }
  }
  for (auto& ad : result.adapters) {
    ad.A = to_storage_precision(ad.A);
    ad.B = to_storage_precision(ad.B);
  }
  return result;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
  std::string text = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, losses[i]);
    text += buf;
  }
  write_bytes_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

CoarseToFineResult coarse_to_fine_sample(const ModelConfig& model_cfg, const Checkpoint& base,
                                         const lora::AdapterSet& lora2, std::uint64_t prompt_seed,
                                         const CoarseToFineConfig& cfg) {
  VIBEKIT_REQUIRE(cfg.denoising_strength >= 0.0 && cfg.denoising_strength <= 1.0, ContractError,
                  "denoising_strength must lie in [0, 1]");
  VIBEKIT_REQUIRE(cfg.steps >= 1 && cfg.upscale >= 1, ContractError, "coarse-to-fine needs steps >= 1 and upscale >= 1");
  const ToyDiT base_model(model_cfg, base);

  CoarseToFineResult r;
  Rng low_rng(prompt_seed, kStreamLowNoise);
  const Tensor noise = gaussian({cfg.low_h, cfg.low_w}, low_rng);
  r.low_res = flow::sample_ode(base_model.field(AttentionMode::kDense), noise, cfg.steps, cfg.method);
  r.upsampled = ops::nearest_upsample2d(r.low_res, cfg.upscale);

  const auto refine_steps =
      static_cast<std::size_t>(std::lround(cfg.denoising_strength * static_cast<double>(cfg.steps)));
  if (refine_steps == 0 || cfg.denoising_strength == 0.0) {
    r.refine_start = r.upsampled;
    r.high_res = r.upsampled;
    return r;
  }
  const ToyDiT refiner(model_cfg, lora::compose_inference(base, lora2));
  Rng refine_rng(prompt_seed, kStreamRefineNoise);
  const Tensor eps = gaussian(r.upsampled.shape(), refine_rng);
  r.refine_start = flow::interpolate(r.upsampled, eps, cfg.denoising_strength);
  r.high_res = flow::integrate_ode(refiner.field(AttentionMode::kGclfa), r.refine_start, cfg.denoising_strength,
                                   refine_steps, cfg.method);
  return r;
}

}  // namespace vibekit::dit
