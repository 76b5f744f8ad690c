// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit_cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "vibekit_cli/digest.hpp"

namespace vibekit::cli {

using nlohmann::json;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid config (" + std::to_string(problems.size()) + " problem" +
                    (problems.size() == 1 ? "" : "s") + "):";
  for (const auto& p : problems) msg += "\n  - " + p;
  return msg;
}

// Walks one JSON object, consuming known keys and remembering problems.
class Reader {
 public:
  Reader(const json& obj, std::string path, std::vector<std::string>& problems)
      : obj_(obj), path_(std::move(path)), problems_(problems) {
    if (!obj_.is_object()) problems_.push_back(where() + "expected an object");
  }
  ~Reader() {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) problems_.push_back(where() + "unknown key '" + key + "'");
    }
  }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  const json* find(const std::string& key) {
    seen_.insert(key);
    if (!obj_.is_object()) return nullptr;
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void size(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0)) {
        out = v->get<std::size_t>();
      } else {
        bad(key, "a non-negative integer");
      }
    }
  }
  void u64(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0)) {
        out = v->get<std::uint64_t>();
      } else {
        bad(key, "a non-negative integer");
      }
    }
  }
  void real(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        bad(key, "a number");
      }
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (v->is_boolean()) {
        out = v->get<bool>();
      } else {
        bad(key, "a boolean");
      }
    }
  }
  void text(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (v->is_string()) {
        out = v->get<std::string>();
      } else {
        bad(key, "a string");
      }
    }
  }
  template <typename E>
  void choice(const std::string& key, E& out, const std::function<E(const std::string&)>& parse) {
    std::string name;
    if (const json* v = find(key)) {
      if (!v->is_string()) return bad(key, "a string");
      try {
        out = parse(v->get<std::string>());
      } catch (const Error& e) {
        problems_.push_back(where() + key + ": " + e.what());
      }
    }
  }
  void strings(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array() || !std::all_of(v->begin(), v->end(), [](const json& e) { return e.is_string(); })) {
        return bad(key, "an array of strings");
      }
      out = v->get<std::vector<std::string>>();
    }
  }
  void dims(const std::string& key, gclfa::GridDims& out) {
    if (const json* v = find(key)) {
      if (!parse_dims(*v, out)) bad(key, "[height, width] with positive integers");
    }
  }
  void dims_list(const std::string& key, std::vector<gclfa::GridDims>& out) {
    if (const json* v = find(key)) {
      std::vector<gclfa::GridDims> list;
      bool ok = v->is_array() && !v->empty();
      if (ok) {
        for (const json& e : *v) {
          gclfa::GridDims g;
          ok = ok && parse_dims(e, g);
          list.push_back(g);
        }
      }
      if (!ok) return bad(key, "a non-empty array of [height, width] pairs");
      out = std::move(list);
    }
  }
  /// Nested object, or nullptr when absent.
  const json* object(const std::string& key) { return find(key); }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  static bool parse_dims(const json& v, gclfa::GridDims& out) {
    if (!v.is_array() || v.size() != 2) return false;
    for (const json& e : v) {
      if (!e.is_number_integer() || e.get<long long>() <= 0) return false;
    }
    out = {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
    return true;
  }
  std::string where() const { return path_.empty() ? "" : path_ + ": "; }
  void bad(const std::string& key, const std::string& expected) {
    problems_.push_back(where() + key + ": expected " + expected);
  }

  const json& obj_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

json dims_json(gclfa::GridDims g) { return json::array({g.h, g.w}); }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : Error(join_problems(problems)), problems_(std::move(problems)) {}

std::string to_string(dit::Objective o) { return o == dit::Objective::kFlowMatching ? "fm" : "hfato"; }
std::string to_string(dit::AttentionMode m) { return m == dit::AttentionMode::kDense ? "dense" : "gclfa"; }
std::string to_string(flow::OdeMethod m) { return m == flow::OdeMethod::kEuler ? "euler" : "heun"; }
std::string to_string(flow::Weighting w) { return w == flow::Weighting::kConstant ? "constant" : "t_squared"; }
std::string to_string(hfato::NoiseVariant v) {
  return v == hfato::NoiseVariant::kInterpolated ? "interpolated" : "literal_additive";
}

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  std::vector<std::string> problems;
  {
    Reader r(j, "", problems);
    r.u64("seed", cfg.seed);
    r.text("output_dir", cfg.output_dir);
    if (const json* m = r.object("model")) {
      Reader mr(*m, "model", problems);
      mr.size("d", cfg.model.d);
      mr.size("n_layers", cfg.model.n_layers);
      mr.size("ffn_mult", cfg.model.ffn_mult);
      mr.real("rope_base", cfg.model.rope_base);
      mr.real("out_init_scale", cfg.model.out_init_scale);
      mr.size("heads", cfg.model.gclfa.heads);
    }
    if (const json* res = r.object("resolution")) {
      Reader rr(*res, "resolution", problems);
      rr.dims("low", cfg.low_res);
      rr.dims("high", cfg.high_res);
      rr.real("texture_amplitude", cfg.texture_amplitude);
    }
    if (const json* g = r.object("gclfa")) {
      Reader gr(*g, "gclfa", problems);
      gclfa::GridDims win{cfg.model.gclfa.window.h, cfg.model.gclfa.window.w};
      gr.dims("window", win);
      cfg.model.gclfa.window.h = win.h;
      cfg.model.gclfa.window.w = win.w;
      gr.boolean("inward", cfg.model.gclfa.window.inward);
      gr.size("pool_ratio", cfg.model.gclfa.coarse.pool_ratio);
      gr.boolean("coarse", cfg.model.gclfa.coarse.enabled);
    }
    if (const json* h = r.object("hfato")) {
      Reader hr(*h, "hfato", problems);
      hr.size("factor", cfg.degradation.factor);
      hr.choice<hfato::Upsample>("upsample", cfg.degradation.up, hfato::parse_upsample);
      hr.choice<hfato::NoiseVariant>("variant", cfg.variant, hfato::parse_variant);
    }
    if (const json* l = r.object("lora")) {
      Reader lr(*l, "lora", problems);
      lr.size("rank", cfg.lora_rank);
      lr.real("alpha", cfg.lora_alpha);
      lr.strings("targets", cfg.lora_targets);
    }
    if (const json* o = r.object("optimizer")) {
      Reader orr(*o, "optimizer", problems);
      orr.real("lr", cfg.optimizer.lr);
      orr.real("beta1", cfg.optimizer.beta1);
      orr.real("beta2", cfg.optimizer.beta2);
      orr.real("eps", cfg.optimizer.eps);
    }
    if (const json* t = r.object("train")) {
      Reader tr(*t, "train", problems);
      tr.size("batch_size", cfg.batch_size);
      tr.real("t_min", cfg.t_min);
      tr.real("t_max", cfg.t_max);
      tr.choice<flow::Weighting>("weighting", cfg.weighting, flow::parse_weighting);
    }
    for (auto [key, stage] : {std::pair{"stage1", &cfg.stage1}, std::pair{"stage2", &cfg.stage2}}) {
      if (const json* s = r.object(key)) {
        Reader sr(*s, key, problems);
        sr.choice<dit::Objective>("objective", stage->objective, dit::parse_objective);
        sr.choice<dit::AttentionMode>("attention", stage->attention, dit::parse_attention_mode);
        sr.size("steps", stage->steps);
      }
    }
    if (const json* s = r.object("sampler")) {
      Reader sr(*s, "sampler", problems);
      sr.choice<flow::OdeMethod>("method", cfg.sampler.method, flow::parse_method);
      sr.size("steps", cfg.sampler.steps);
      sr.real("denoising_strength", cfg.sampler.denoising_strength);
      sr.real("guidance_scale", cfg.sampler.guidance_scale);
    }
    if (const json* b = r.object("bench")) {
      Reader br(*b, "bench", problems);
      br.dims_list("grids", cfg.bench.grids);
      gclfa::GridDims win{cfg.bench.window.h, cfg.bench.window.w};
      br.dims("window", win);
      cfg.bench.window.h = win.h;
      cfg.bench.window.w = win.w;
      br.size("pool_ratio", cfg.bench.pool_ratio);
      br.size("d", cfg.bench.d);
      br.size("repeats", cfg.bench.repeats);
    }
  }
  for (auto& p : validate(cfg)) problems.push_back(std::move(p));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({"cannot open config '" + path.string() + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError({path.string() + ": not valid JSON: " + e.what()});
  }
  return parse_config(j);
}

std::vector<std::string> validate(const RunConfig& cfg) {
  std::vector<std::string> problems;
  const auto check = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  const auto guarded = [&](const std::string& where, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      problems.push_back(where + ": " + e.what());
    }
  };
  check(cfg.model.d >= 4 && cfg.model.d % 4 == 0, "model.d: must be a positive multiple of 4");
  check(cfg.model.n_layers >= 1, "model.n_layers: must be >= 1");
  check(cfg.model.ffn_mult >= 1, "model.ffn_mult: must be >= 1");
  check(cfg.model.rope_base > 1.0, "model.rope_base: must be > 1");
  check(cfg.model.out_init_scale >= 0.0, "model.out_init_scale: must be >= 0");
  check(cfg.texture_amplitude >= 0.0, "resolution.texture_amplitude: must be >= 0");

  if (cfg.model.d % 4 == 0 && cfg.model.d > 0) {
    guarded("gclfa (high resolution)", [&] { gclfa::validate(cfg.high_res, cfg.model.d, cfg.model.gclfa); });
    if (cfg.stage1.attention == dit::AttentionMode::kGclfa) {
      guarded("gclfa (low resolution)", [&] { gclfa::validate(cfg.low_res, cfg.model.d, cfg.model.gclfa); });
    }
  }

  check(cfg.high_res.h % cfg.low_res.h == 0 && cfg.high_res.w % cfg.low_res.w == 0 &&
            cfg.high_res.h / cfg.low_res.h == cfg.high_res.w / cfg.low_res.w,
        "resolution: high must be the same integer multiple of low on both axes");
  check(cfg.degradation.factor >= 1, "hfato.factor: must be >= 1");
  if (cfg.degradation.factor >= 1) {
    for (const auto& [name, g, stage] :
         {std::tuple{"low", cfg.low_res, &cfg.stage1}, std::tuple{"high", cfg.high_res, &cfg.stage2}}) {
      if (stage->objective != dit::Objective::kHfato) continue;
      check(g.h % cfg.degradation.factor == 0 && g.w % cfg.degradation.factor == 0,
            std::string("hfato.factor: must divide the ") + name + " resolution");
    }
  }

  check(cfg.lora_rank >= 1 && cfg.lora_rank <= cfg.model.d,
        "lora.rank: must be in [1, model.d] (" + std::to_string(cfg.model.d) + ")");
  check(cfg.lora_alpha > 0.0, "lora.alpha: must be > 0");
  check(!cfg.lora_targets.empty(), "lora.targets: no trainable parameters: LoRA target list is empty");
  const std::set<std::string> known{"q", "k", "v", "o", "ffn.0", "ffn.2"};
  for (const auto& t : cfg.lora_targets) check(known.count(t) != 0, "lora.targets: unknown target '" + t + "'");

  check(cfg.optimizer.lr > 0.0, "optimizer.lr: must be > 0");
  check(cfg.optimizer.beta1 >= 0.0 && cfg.optimizer.beta1 < 1.0, "optimizer.beta1: must be in [0, 1)");
  check(cfg.optimizer.beta2 >= 0.0 && cfg.optimizer.beta2 < 1.0, "optimizer.beta2: must be in [0, 1)");
  check(cfg.optimizer.eps > 0.0, "optimizer.eps: must be > 0");
  check(cfg.batch_size >= 1, "train.batch_size: must be >= 1");
  check(cfg.t_min > 0.0 && cfg.t_min < cfg.t_max && cfg.t_max <= 1.0,
        "train: need 0 < t_min < t_max <= 1");

  check(cfg.sampler.steps >= 1, "sampler.steps: must be >= 1");
  check(cfg.sampler.denoising_strength >= 0.0 && cfg.sampler.denoising_strength <= 1.0,
        "sampler.denoising_strength: must be in [0, 1]");
  check(std::isfinite(cfg.sampler.guidance_scale), "sampler.guidance_scale: must be finite");

  check(cfg.bench.d >= 4 && cfg.bench.d % 4 == 0, "bench.d: must be a positive multiple of 4");
  check(cfg.bench.repeats >= 1, "bench.repeats: must be >= 1");
  for (const auto& g : cfg.bench.grids) {
    guarded("bench grid " + std::to_string(g.h) + "x" + std::to_string(g.w), [&] {
      gclfa::validate(g, cfg.bench.window);
      gclfa::validate(g, gclfa::CoarseSpec{cfg.bench.pool_ratio, true});
    });
  }
  return problems;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["model"] = {{"d", cfg.model.d},
                {"n_layers", cfg.model.n_layers},
                {"ffn_mult", cfg.model.ffn_mult},
                {"rope_base", cfg.model.rope_base},
                {"out_init_scale", cfg.model.out_init_scale},
                {"heads", cfg.model.gclfa.heads}};
  j["resolution"] = {
      {"low", dims_json(cfg.low_res)}, {"high", dims_json(cfg.high_res)}, {"texture_amplitude", cfg.texture_amplitude}};
  j["gclfa"] = {{"window", json::array({cfg.model.gclfa.window.h, cfg.model.gclfa.window.w})},
                {"inward", cfg.model.gclfa.window.inward},
                {"pool_ratio", cfg.model.gclfa.coarse.pool_ratio},
                {"coarse", cfg.model.gclfa.coarse.enabled}};
  j["hfato"] = {{"factor", cfg.degradation.factor},
                {"upsample", hfato::to_string(cfg.degradation.up)},
                {"variant", to_string(cfg.variant)}};
  j["lora"] = {{"rank", cfg.lora_rank}, {"alpha", cfg.lora_alpha}, {"targets", cfg.lora_targets}};
  j["optimizer"] = {{"lr", cfg.optimizer.lr},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"eps", cfg.optimizer.eps}};
  j["train"] = {{"batch_size", cfg.batch_size},
                {"t_min", cfg.t_min},
                {"t_max", cfg.t_max},
                {"weighting", to_string(cfg.weighting)}};
  for (auto [key, stage] : {std::pair{"stage1", &cfg.stage1}, std::pair{"stage2", &cfg.stage2}}) {
    j[key] = {{"objective", to_string(stage->objective)},
              {"attention", to_string(stage->attention)},
              {"steps", stage->steps}};
  }
  j["sampler"] = {{"method", to_string(cfg.sampler.method)},
                  {"steps", cfg.sampler.steps},
                  {"denoising_strength", cfg.sampler.denoising_strength},
                  {"guidance_scale", cfg.sampler.guidance_scale}};
  json grids = json::array();
  for (const auto& g : cfg.bench.grids) grids.push_back(dims_json(g));
  j["bench"] = {{"grids", grids},
                {"window", json::array({cfg.bench.window.h, cfg.bench.window.w})},
                {"pool_ratio", cfg.bench.pool_ratio},
                {"d", cfg.bench.d},
                {"repeats", cfg.bench.repeats}};
  return j;
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

dit::TrainConfig stage_train_config(const RunConfig& cfg, int stage) {
  const StageConfig& s = stage == 1 ? cfg.stage1 : cfg.stage2;
  dit::TrainConfig t;
  t.objective = s.objective;
  t.attention = s.attention;
  t.steps = s.steps;
  t.lora_targets = cfg.lora_targets;
  t.rank = cfg.lora_rank;
  t.alpha = cfg.lora_alpha;
  t.batch_size = cfg.batch_size;
  t.optimizer = cfg.optimizer;
  t.seed = stage == 1 ? cfg.seed : cfg.seed + 1;
  t.t_min = cfg.t_min;
  t.t_max = cfg.t_max;
  t.weighting = cfg.weighting;
  t.degradation = cfg.degradation;
  t.variant = cfg.variant;
  return t;
}

dit::DatasetConfig dataset_config(const RunConfig& cfg, int stage) {
  const gclfa::GridDims g = stage == 1 ? cfg.low_res : cfg.high_res;
  return {stage == 1 ? cfg.seed : cfg.seed + 1, g.h, g.w, cfg.texture_amplitude};
}

relay::RelayConfig to_relay_config(const RunConfig& cfg) {
  relay::RelayConfig r = relay::default_relay_config(cfg.seed);
  r.model = cfg.model;
  r.low_data = dataset_config(cfg, 1);
  r.high_data = dataset_config(cfg, 2);
  r.stage1 = stage_train_config(cfg, 1);
  r.stage2 = stage_train_config(cfg, 2);
  return r;
}

dit::CoarseToFineConfig coarse_to_fine_config(const RunConfig& cfg) {
  dit::CoarseToFineConfig c;
  c.low_h = cfg.low_res.h;
  c.low_w = cfg.low_res.w;
  c.upscale = cfg.high_res.h / cfg.low_res.h;
  c.steps = cfg.sampler.steps;
  c.denoising_strength = cfg.sampler.denoising_strength;
  c.method = cfg.sampler.method;
  return c;
}

}  // namespace vibekit::cli
