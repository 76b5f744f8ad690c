// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit_cli/app.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "vibekit/checkpoint.hpp"
#include "vibekit/hfato.hpp"
#include "vibekit/relay_lora.hpp"
#include "vibekit/toydit.hpp"
#include "vibekit_cli/bench.hpp"
#include "vibekit_cli/config.hpp"
#include "vibekit_cli/digest.hpp"

#ifndef VIBEKIT_VERSION
#define VIBEKIT_VERSION "0.0.0"
#endif

namespace vibekit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  usage error or unknown subcommand\n"
    "  3  config schema or validation error\n"
    "  4  missing input file\n"
    "  5  malformed VBCP input\n"
    "  6  relay violation (LoRA2 composed onto stage-1-merged weights)\n"
    "  7  numeric divergence\n"
    "  8  shape or contract violation\n"
    "\n"
    "Outputs go to --out, else $VIBEKIT_OUT, else the config's output_dir, else ./out.\n";

const std::vector<std::string> kSubcommands{"train-stage1", "train-stage2", "merge-lora",     "strip-lora",
                                            "compose",      "sample",       "coarse-to-fine", "mask-stats",
                                            "bench-attn",   "degrade",      "hf-energy",      "inspect"};

gclfa::GridDims parse_hxw(const std::string& text, const std::string& flag) {
  const auto x = text.find('x');
  std::size_t h = 0, w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    h = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    w = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    throw CLI::ValidationError(flag, "expected HxW, got '" + text + "'");
  }
  return {h, w};
}

std::string hxw(gclfa::GridDims g) { return std::to_string(g.h) + "x" + std::to_string(g.w); }

// Everything one subcommand invocation needs: resolved config, output dir, manifest.
class Run {
 public:
  Run(std::string subcommand, RunConfig cfg, const std::string& out_flag)
      : subcommand_(std::move(subcommand)), cfg_(std::move(cfg)) {
    if (!out_flag.empty()) {
      dir_ = out_flag;
    } else if (const char* env = std::getenv("VIBEKIT_OUT"); env && *env) {
      dir_ = env;
    } else if (!cfg_.output_dir.empty()) {
      dir_ = cfg_.output_dir;
    } else {
      dir_ = "out";
    }
  }

  const RunConfig& config() const { return cfg_; }
  json& parameters() { return params_; }

  fs::path input(const std::string& role, const std::string& path) {
    if (path.empty() || !fs::is_regular_file(path)) {
      throw MissingInput(role + " file '" + path + "' does not exist");
    }
    inputs_[role] = {{"file", fs::path(path).filename().string()}, {"sha256", sha256_file(path)}};
    return path;
  }
  Checkpoint checkpoint(const std::string& role, const std::string& path) {
    return vbcp::read_file(input(role, path));
  }

  void write(const std::string& name, const std::vector<std::uint8_t>& bytes) {
    fs::create_directories(dir_);
    write_bytes_atomic(dir_ / name, bytes);
    outputs_[name] = sha256_hex(bytes);
  }
  void write(const std::string& name, const std::string& text) {
    write(name, std::vector<std::uint8_t>(text.begin(), text.end()));
  }
  void write(const std::string& name, const Checkpoint& ckpt) { write(name, vbcp::encode(ckpt)); }

  void finish() {
    json m;
    m["subcommand"] = subcommand_;
    m["config_hash"] = config_hash(cfg_);
    m["seed"] = cfg_.seed;
    m["versions"] = {{"vibekit", VIBEKIT_VERSION}, {"vbcp", vbcp::kVersion}, {"manifest", 1}};
    m["parameters"] = params_.is_null() ? json::object() : params_;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    fs::create_directories(dir_);
    const std::string text = m.dump(2) + "\n";
    write_bytes_atomic(dir_ / "manifest.json", std::vector<std::uint8_t>(text.begin(), text.end()));
  }

 private:
  std::string subcommand_;
  RunConfig cfg_;
  fs::path dir_;
  json params_ = json::object();
  json inputs_ = json::object();
  json outputs_ = json::object();
};

std::string loss_csv(const std::vector<double>& losses) {
  std::string s = "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) s += std::to_string(i) + "," + format_double(losses[i]) + "\n";
  return s;
}

struct Options {
  std::string config;
  std::string out;
  std::string base, lora, merged, input, tensor, attention = "dense", resolution = "low";
  std::string grid = "8x8", win = "4x4", grids;
  std::size_t pool = 2, dim = 16, threads = 1, count = 1, factor = 0, repeats = 0;
  std::string upsample;
  bool no_inward = false;
};

void cmd_train_stage1(Run& run, const Options& o) {
  const RunConfig& cfg = run.config();
  Checkpoint base;
  if (!o.base.empty()) {
    base = run.checkpoint("base", o.base);
  } else {
    base = dit::ToyDiT::init(cfg.model, cfg.seed).weights();
    run.write("base.vbcp", base);
  }
  const dit::ToyDiT w0(cfg.model, base);
  const dit::TrainResult r = dit::train(w0, dit::SyntheticDataset(dataset_config(cfg, 1)), stage_train_config(cfg, 1));
  run.write("lora1.vbcp", lora::adapters_to_checkpoint(r.adapters, "lora1"));
  run.write("merged.vbcp", lora::merge(base, r.adapters));
  run.write("stage1_loss.csv", loss_csv(r.losses));
}

void cmd_train_stage2(Run& run, const Options& o) {
  const RunConfig& cfg = run.config();
  const Checkpoint merged = run.checkpoint("merged", o.merged);
  const dit::ToyDiT w1(cfg.model, merged);
  const dit::TrainResult r = dit::train(w1, dit::SyntheticDataset(dataset_config(cfg, 2)), stage_train_config(cfg, 2));
  run.write("lora2.vbcp", lora::adapters_to_checkpoint(r.adapters, "lora2"));
  run.write("stage2_loss.csv", loss_csv(r.losses));
}

void cmd_merge(Run& run, const Options& o) {
  const Checkpoint base = run.checkpoint("base", o.base);
  const lora::AdapterSet adapters = lora::adapters_from_checkpoint(run.checkpoint("lora", o.lora));
  run.write("merged.vbcp", lora::merge(base, adapters));
}

void cmd_strip(Run& run, const Options& o) {
  const Checkpoint merged = run.checkpoint("merged", o.merged);
  const lora::AdapterSet adapters = lora::adapters_from_checkpoint(run.checkpoint("lora", o.lora));
  run.write("stripped.vbcp", lora::strip(merged, adapters));
}

void cmd_compose(Run& run, const Options& o) {
  const Checkpoint base = run.checkpoint("base", o.base);
  const lora::AdapterSet adapters = lora::adapters_from_checkpoint(run.checkpoint("lora", o.lora));
  run.write("composed.vbcp", lora::compose_inference(base, adapters));
}

void cmd_sample(Run& run, const Options& o, std::ostream& out) {
  const RunConfig& cfg = run.config();
  Checkpoint weights = run.checkpoint("base", o.base);
  if (!o.lora.empty()) {
    weights = lora::compose_inference(weights, lora::adapters_from_checkpoint(run.checkpoint("lora", o.lora)));
  }
  const dit::ToyDiT model(cfg.model, weights);
  const dit::AttentionMode mode = dit::parse_attention_mode(o.attention);
  VIBEKIT_REQUIRE(o.resolution == "low" || o.resolution == "high", ContractError,
                  "--res must be low or high, got '" + o.resolution + "'");
  const gclfa::GridDims g = o.resolution == "low" ? cfg.low_res : cfg.high_res;
  run.parameters() = {{"count", o.count}, {"attention", o.attention}, {"res", o.resolution}};

  Checkpoint samples;
  samples.metadata()["prompt_seed0"] = std::to_string(cfg.seed);
  std::string csv = "index,prompt_seed,hf_energy\n";
  for (std::size_t i = 0; i < o.count; ++i) {
    const std::uint64_t prompt_seed = cfg.seed + i;
    Rng rng(prompt_seed, 4);
    const Tensor x1 = gaussian({g.h, g.w}, rng);
    const Tensor x = flow::sample_ode(model.field(mode), x1, cfg.sampler.steps, cfg.sampler.method);
    samples.set("sample." + std::to_string(i), x);
    csv += std::to_string(i) + "," + std::to_string(prompt_seed) + "," + format_double(hfato::hf_energy(x)) + "\n";
  }
  run.write("samples.vbcp", samples);
  run.write("samples.csv", csv);
  out << csv;
}

void cmd_coarse_to_fine(Run& run, const Options& o, std::ostream& out) {
  const RunConfig& cfg = run.config();
  const Checkpoint base = run.checkpoint("base", o.base);
  const lora::AdapterSet lora2 = lora::adapters_from_checkpoint(run.checkpoint("lora", o.lora));
  run.parameters() = {{"count", o.count}};
  Checkpoint result;
  std::string csv = "prompt_seed,hf_energy_upsampled,hf_energy_high_res\n";
  for (std::size_t i = 0; i < o.count; ++i) {
    const std::uint64_t prompt_seed = cfg.seed + i;
    const dit::CoarseToFineResult r =
        dit::coarse_to_fine_sample(cfg.model, base, lora2, prompt_seed, coarse_to_fine_config(cfg));
    const std::string suffix = "." + std::to_string(i);
    result.set("low_res" + suffix, r.low_res);
    result.set("upsampled" + suffix, r.upsampled);
    result.set("high_res" + suffix, r.high_res);
    csv += std::to_string(prompt_seed) + "," + format_double(hfato::hf_energy(r.upsampled)) + "," +
           format_double(hfato::hf_energy(r.high_res)) + "\n";
  }
  run.write("coarse_to_fine.vbcp", result);
  run.write("coarse_to_fine.csv", csv);
  out << csv;
}

void cmd_mask_stats(Run& run, const Options& o, std::ostream& out) {
  const gclfa::GridDims grid = parse_hxw(o.grid, "--grid");
  const gclfa::GridDims win_hw = parse_hxw(o.win, "--win");
  const gclfa::WindowSpec win{win_hw.w, win_hw.h, !o.no_inward};
  const gclfa::CoarseSpec coarse{o.pool, true};
  const gclfa::MaskStats st = gclfa::mask_stats(grid, win, coarse, o.dim);
  run.parameters() = {{"grid", o.grid}, {"win", o.win}, {"pool", o.pool}, {"dim", o.dim}, {"inward", win.inward}};

  std::ostringstream text;
  text << "grid " << hxw(grid) << "  window " << hxw(win_hw) << "  pool " << o.pool << "  d " << o.dim << "\n";
  text << "local_keys " << st.local_keys << "\n";
  text << "coarse_keys " << st.coarse_keys << "\n";
  text << "keys_per_query";
  for (const auto& [keys, queries] : st.keys_per_query) text << " " << keys << ":" << queries;
  text << "\n";
  text << "flops_dense " << st.flops_dense << "\n";
  text << "flops_sparse " << st.flops_sparse << "\n";
  text << "flops_reference " << st.flops_reference << "\n";
  text << "reduction " << format_double(st.reduction) << "\n";
  out << text.str();

  const std::string csv =
      "grid_h,grid_w,win_h,win_w,s,d,local_keys,coarse_keys,flops_dense,flops_sparse,flops_reference,reduction\n" +
      std::to_string(grid.h) + "," + std::to_string(grid.w) + "," + std::to_string(win.h) + "," +
      std::to_string(win.w) + "," + std::to_string(o.pool) + "," + std::to_string(o.dim) + "," +
      std::to_string(st.local_keys) + "," + std::to_string(st.coarse_keys) + "," + std::to_string(st.flops_dense) +
      "," + std::to_string(st.flops_sparse) + "," + std::to_string(st.flops_reference) + "," +
      format_double(st.reduction) + "\n";
  run.write("mask_stats.csv", csv);
}

void cmd_bench_attn(Run& run, const Options& o, std::ostream& out) {
  const RunConfig& cfg = run.config();
  BenchSpec spec;
  spec.grids = cfg.bench.grids;
  if (!o.grids.empty()) {
    spec.grids.clear();
    std::stringstream ss(o.grids);
    for (std::string item; std::getline(ss, item, ',');) spec.grids.push_back(parse_hxw(item, "--grids"));
  }
  spec.window = cfg.bench.window;
  if (!o.win.empty()) {
    const gclfa::GridDims w = parse_hxw(o.win, "--win");
    spec.window = {w.w, w.h, true};
  }
  spec.pool_ratio = o.pool ? o.pool : cfg.bench.pool_ratio;
  spec.d = o.dim ? o.dim : cfg.bench.d;
  spec.repeats = o.repeats ? o.repeats : cfg.bench.repeats;
  spec.threads = std::max<std::size_t>(o.threads, 1);
  spec.seed = cfg.seed;

  json grids = json::array();
  for (const auto& g : spec.grids) grids.push_back(hxw(g));
  run.parameters() = {{"grids", grids},
                      {"win", hxw({spec.window.h, spec.window.w})},
                      {"pool", spec.pool_ratio},
                      {"dim", spec.d},
                      {"repeats", spec.repeats},
                      {"threads", spec.threads}};
  const std::string csv = bench_csv(bench_attn(spec));
  run.write("bench_attn.csv", csv);
  out << csv;
}

void cmd_degrade(Run& run, const Options& o) {
  const RunConfig& cfg = run.config();
  const Checkpoint in = run.checkpoint("input", o.input);
  hfato::DegradationConfig dc = cfg.degradation;
  if (o.factor) dc.factor = o.factor;
  if (!o.upsample.empty()) dc.up = hfato::parse_upsample(o.upsample);
  run.parameters() = {{"factor", dc.factor}, {"upsample", hfato::to_string(dc.up)}, {"tensor", o.tensor}};
  Checkpoint outc;
  outc.metadata() = in.metadata();
  bool found = o.tensor.empty();
  for (const auto& [name, t] : in.entries()) {
    if (!o.tensor.empty() && name != o.tensor) continue;
    found = true;
    outc.set(name, hfato::degrade(t, dc));
  }
  VIBEKIT_REQUIRE(found, ContractError, "tensor '" + o.tensor + "' not in " + o.input);
  run.write("degraded.vbcp", outc);
}

void cmd_hf_energy(Run& run, const Options& o, std::ostream& out) {
  const Checkpoint in = run.checkpoint("input", o.input);
  run.parameters() = {{"tensor", o.tensor}};
  std::string csv = "tensor,hf_energy\n";
  bool found = false;
  for (const auto& [name, t] : in.entries()) {
    if (!o.tensor.empty() && name != o.tensor) continue;
    if (o.tensor.empty() && t.rank() != 2) continue;
    found = true;
    csv += name + "," + format_double(hfato::hf_energy(t)) + "\n";
  }
  VIBEKIT_REQUIRE(found, ContractError,
                  o.tensor.empty() ? "no rank-2 tensors in " + o.input : "tensor '" + o.tensor + "' not in " + o.input);
  run.write("hf_energy.csv", csv);
  out << csv;
}

void cmd_inspect(Run& run, const Options& o, std::ostream& out) {
  const std::string text = vbcp::header_json(read_bytes(run.input("input", o.input)));
  out << text;
  run.write("header.json", text);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (!args.empty() && !args[0].empty() && args[0][0] != '-' &&
      std::find(kSubcommands.begin(), kSubcommands.end(), args[0]) == kSubcommands.end()) {
    err << "error: unknown subcommand '" << args[0] << "' (run 'vibekit --help' for the list)\n";
    return kExitUsage;
  }

  CLI::App app{"vibekit: flow-matching, relay LoRA and windowed attention toolkit", "vibekit"};
  app.footer(kExitCodes);
  app.require_subcommand(1);
  app.set_version_flag("--version", VIBEKIT_VERSION);

  Options o;
  std::map<std::string, CLI::App*> sub;
  const auto add = [&](const std::string& name, const std::string& desc, bool uses_config = true) {
    CLI::App* s = app.add_subcommand(name, desc);
    if (uses_config) s->add_option("--config", o.config, "JSON run config (defaults when omitted)");
    s->add_option("--out", o.out, "output directory");
    sub[name] = s;
    return s;
  };

  auto* s1 = add("train-stage1", "train LoRA1 on low-res data (flow matching) and merge it");
  s1->add_option("--base", o.base, "base weights (initialised from the seed when omitted)");
  auto* s2 = add("train-stage2", "train LoRA2 on high-res data against the stage-1-merged weights");
  s2->add_option("--merged", o.merged, "merged weights from train-stage1")->required();
  auto* mg = add("merge-lora", "W + delta(LoRA)", false);
  mg->add_option("--base", o.base)->required();
  mg->add_option("--lora", o.lora)->required();
  auto* st = add("strip-lora", "W - delta(LoRA)", false);
  st->add_option("--merged", o.merged)->required();
  st->add_option("--lora", o.lora)->required();
  auto* cp = add("compose", "inference weights W0 + delta(LoRA2); refuses merged bases", false);
  cp->add_option("--base", o.base)->required();
  cp->add_option("--lora", o.lora)->required();
  auto* sm = add("sample", "sample images from noise with the PF-ODE");
  sm->add_option("--base", o.base)->required();
  sm->add_option("--lora", o.lora, "compose this adapter onto the base first");
  sm->add_option("--count", o.count, "number of samples (prompt seeds seed .. seed+count-1)");
  sm->add_option("--attention", o.attention, "dense|gclfa");
  sm->add_option("--res", o.resolution, "low|high");
  auto* cf = add("coarse-to-fine", "low-res sample, upsample, re-noise and refine with LoRA2");
  cf->add_option("--base", o.base)->required();
  cf->add_option("--lora", o.lora)->required();
  cf->add_option("--count", o.count, "number of prompt seeds");
  auto* ms = add("mask-stats", "key counts and MAC costs of a window/pool configuration", false);
  ms->add_option("--grid", o.grid, "token grid HxW")->capture_default_str();
  ms->add_option("--win", o.win, "local window HxW")->capture_default_str();
  ms->add_option("--pool", o.pool, "coarse pool ratio")->capture_default_str();
  ms->add_option("--dim", o.dim, "channel width")->capture_default_str();
  ms->add_flag("--no-inward", o.no_inward, "clip the window at borders instead of shifting it");
  auto* ba = add("bench-attn", "time dense reference, blocked and full attention over a grid sweep");
  ba->add_option("--threads", o.threads, "threads for the blocked executor")->capture_default_str();
  ba->add_option("--grids", o.grids, "comma-separated HxW list (overrides config)");
  ba->add_option("--win", o.win, "local window HxW (overrides config)");
  ba->add_option("--pool", o.pool, "coarse pool ratio (overrides config)");
  ba->add_option("--dim", o.dim, "channel width (overrides config)");
  ba->add_option("--repeats", o.repeats, "timed repetitions per point (best is kept)");
  auto* dg = add("degrade", "downsample-upsample every tensor of a VBCP file");
  dg->add_option("--input", o.input)->required();
  dg->add_option("--tensor", o.tensor, "only this tensor");
  dg->add_option("--factor", o.factor, "pool factor (config hfato.factor when omitted)");
  dg->add_option("--upsample", o.upsample, "nearest|bilinear");
  auto* he = add("hf-energy", "mean squared Laplacian of rank-2 tensors", false);
  he->add_option("--input", o.input)->required();
  he->add_option("--tensor", o.tensor, "only this tensor");
  auto* in = add("inspect", "print the JSON header of a VBCP file", false);
  in->add_option("file", o.input, "VBCP file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  // bench-attn: --win / --pool / --dim default to the config's bench section.
  if (sub["bench-attn"]->parsed()) {
    if (sub["bench-attn"]->count("--win") == 0) o.win.clear();
    if (sub["bench-attn"]->count("--pool") == 0) o.pool = 0;
    if (sub["bench-attn"]->count("--dim") == 0) o.dim = 0;
  }
  std::string name;
  for (const auto& [n, s] : sub) {
    if (s->parsed()) name = n;
  }

  try {
    RunConfig cfg = o.config.empty() ? parse_config(json::object()) : [&] {
      if (!fs::is_regular_file(o.config)) throw MissingInput("config '" + o.config + "' does not exist");
      return load_config(o.config);
    }();
    Run r(name, std::move(cfg), o.out);
    if (name == "train-stage1") cmd_train_stage1(r, o);
    else if (name == "train-stage2") cmd_train_stage2(r, o);
    else if (name == "merge-lora") cmd_merge(r, o);
    else if (name == "strip-lora") cmd_strip(r, o);
    else if (name == "compose") cmd_compose(r, o);
    else if (name == "sample") cmd_sample(r, o, out);
    else if (name == "coarse-to-fine") cmd_coarse_to_fine(r, o, out);
    else if (name == "mask-stats") cmd_mask_stats(r, o, out);
    else if (name == "bench-attn") cmd_bench_attn(r, o, out);
    else if (name == "degrade") cmd_degrade(r, o);
    else if (name == "hf-energy") cmd_hf_energy(r, o, out);
    else if (name == "inspect") cmd_inspect(r, o, out);
    r.finish();
    return kExitOk;
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const RelayViolation& e) {
    err << "error: " << e.what() << "\n";
    return kExitRelayViolation;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace vibekit::cli
