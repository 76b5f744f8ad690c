// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/relay_lora.hpp"

#include <charconv>
#include <cmath>

#include "vibekit/error.hpp"
#include "vibekit/ops.hpp"

namespace vibekit::lora {

namespace {

constexpr const char* kSuffixA = ".lora_A";
constexpr const char* kSuffixB = ".lora_B";

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  VIBEKIT_REQUIRE(res.ec == std::errc() && res.ptr == s.data() + s.size(), FormatError,
                  "metadata '" + what + "' is not a number: '" + s + "'");
  return v;
}

std::size_t merge_depth(const Checkpoint& ckpt) {
  return static_cast<std::size_t>(parse_double(ckpt.meta("merge_depth", "0"), "merge_depth"));
}

std::string target_list(const AdapterSet& adapters) {
  std::string out;
  for (const auto& a : adapters) {
    if (!out.empty()) out += ',';
    out += a.target_name;
  }
  return out;
}

void check_target(const Checkpoint& base, const LoRAAdapter& a) {
  validate(a);
  VIBEKIT_REQUIRE(base.contains(a.target_name), ContractError,
                  "adapter target '" + a.target_name + "' is missing from the checkpoint");
  const Tensor& w = base.get(a.target_name);
  VIBEKIT_REQUIRE(w.rank() == 2 && w.dim(0) == a.d_out() && w.dim(1) == a.d_in(), ShapeError,
                  "adapter for '" + a.target_name + "' expects " + std::to_string(a.d_out()) + "x" +
                      std::to_string(a.d_in()) + ", checkpoint holds " + shape_str(w.shape()));
}

// W + sign * delta with the delta rounded to storage precision.
Checkpoint apply(const Checkpoint& base, const AdapterSet& adapters, double sign) {
  for (const auto& a : adapters) check_target(base, a);
  Checkpoint out = base;
  for (const auto& a : adapters) {
    const Tensor d = to_storage_precision(delta(a));
    Tensor& w = out.get_mut(a.target_name);
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] += sign * d[i];
  }
  return out;
}

}  // namespace

void validate(const LoRAAdapter& a) {
  VIBEKIT_REQUIRE(a.rank >= 1, ContractError, "adapter '" + a.target_name + "': rank must be >= 1");
  VIBEKIT_REQUIRE(a.alpha > 0.0, ContractError, "adapter '" + a.target_name + "': alpha must be positive");
  VIBEKIT_REQUIRE(a.A.rank() == 2 && a.B.rank() == 2, ShapeError, "adapter '" + a.target_name + "': factors must be matrices");
  VIBEKIT_REQUIRE(a.A.dim(0) == a.rank && a.B.dim(1) == a.rank, ShapeError,
                  "adapter '" + a.target_name + "': A " + shape_str(a.A.shape()) + " and B " + shape_str(a.B.shape()) +
                      " disagree with rank " + std::to_string(a.rank));
  VIBEKIT_REQUIRE(a.rank <= std::min(a.d_in(), a.d_out()), ContractError,
                  "adapter '" + a.target_name + "': rank exceeds min(d_in, d_out)");
}

LoRAAdapter init_adapter(const std::string& target, std::size_t d_in, std::size_t d_out, std::size_t rank,
                         double alpha, Rng& rng) {
  LoRAAdapter a{target, gaussian({rank, d_in}, rng, 1.0 / std::sqrt(static_cast<double>(rank))),
                Tensor({d_out, rank}), rank, alpha};
  validate(a);
  return a;
}

Tensor delta(const LoRAAdapter& adapter) {
  validate(adapter);
  return ops::scale(ops::matmul(adapter.B, adapter.A), adapter.scale());
}

Checkpoint merge(const Checkpoint& base, const AdapterSet& adapters) {
  if (adapters.empty()) return base;
  Checkpoint out = apply(base, adapters, 1.0);
  auto& meta = out.metadata();
  const std::size_t depth = merge_depth(base) + 1;
  if (depth == 1) meta["stage_before_merge"] = base.meta("stage");
  meta["merge_depth"] = std::to_string(depth);
  meta["merge." + std::to_string(depth) + ".targets"] = target_list(adapters);
  meta["stage"] = "merged";
  return out;
}

Checkpoint strip(const Checkpoint& merged, const AdapterSet& adapters) {
  if (adapters.empty()) return merged;
  Checkpoint out = apply(merged, adapters, -1.0);
  auto& meta = out.metadata();
  const std::size_t depth = merge_depth(merged);
  if (depth == 0) return out;
  meta.erase("merge." + std::to_string(depth) + ".targets");
  if (depth == 1) {
    meta.erase("merge_depth");
    const std::string prev = out.meta("stage_before_merge");
    meta.erase("stage_before_merge");
    if (prev.empty()) {
      meta.erase("stage");
    } else {
      meta["stage"] = prev;
    }
  } else {
    meta["merge_depth"] = std::to_string(depth - 1);
  }
  return out;
}

bool has_merged_adapter(const Checkpoint& ckpt) { return merge_depth(ckpt) > 0 || ckpt.meta("stage") == "merged"; }

Checkpoint compose_inference(const Checkpoint& base, const AdapterSet& lora2) {
  if (has_merged_adapter(base)) {
    throw RelayViolation(
        "relay violation: inference adapters must be composed onto the original base weights, but this "
        "checkpoint already has a merged adapter (merge_depth=" +
        base.meta("merge_depth", "0") + ")");
  }
  Checkpoint out = apply(base, lora2, 1.0);
  out.metadata()["stage"] = "inference";
  out.metadata()["inference.targets"] = target_list(lora2);
  return out;
}

Checkpoint adapters_to_checkpoint(const AdapterSet& adapters, const std::string& stage) {
  Checkpoint ckpt;
  if (!adapters.empty()) {
    ckpt.metadata()["lora_rank"] = std::to_string(adapters.front().rank);
    ckpt.metadata()["lora_alpha"] = format_double(adapters.front().alpha);
  }
  ckpt.metadata()["stage"] = stage;
  for (const auto& a : adapters) {
    validate(a);
    VIBEKIT_REQUIRE(a.rank == adapters.front().rank && a.alpha == adapters.front().alpha, ContractError,
                    "adapters in one checkpoint must share rank and alpha");
    VIBEKIT_REQUIRE(!ckpt.contains(a.target_name + kSuffixA), ContractError,
                    "duplicate adapter target '" + a.target_name + "'");
    ckpt.set(a.target_name + kSuffixA, a.A);
    ckpt.set(a.target_name + kSuffixB, a.B);
  }
  return ckpt;
}

AdapterSet adapters_from_checkpoint(const Checkpoint& ckpt) {
  AdapterSet out;
  if (ckpt.size() == 0) return out;
  const std::string rank_s = ckpt.meta("lora_rank");
  const std::string alpha_s = ckpt.meta("lora_alpha");
  VIBEKIT_REQUIRE(!rank_s.empty() && !alpha_s.empty(), FormatError,
                  "adapter checkpoint lacks lora_rank / lora_alpha metadata");
  const auto rank = static_cast<std::size_t>(parse_double(rank_s, "lora_rank"));
  const double alpha = parse_double(alpha_s, "lora_alpha");
  const std::string suffix_a = kSuffixA;
  for (const auto& [name, t] : ckpt.entries()) {
    if (name.size() <= suffix_a.size() || name.compare(name.size() - suffix_a.size(), suffix_a.size(), suffix_a) != 0)
      continue;
    const std::string target = name.substr(0, name.size() - suffix_a.size());
    VIBEKIT_REQUIRE(ckpt.contains(target + kSuffixB), FormatError, "adapter '" + target + "' has A but no B factor");
    LoRAAdapter a{target, t, ckpt.get(target + kSuffixB), rank, alpha};
    validate(a);
    out.push_back(std::move(a));
  }
  VIBEKIT_REQUIRE(out.size() * 2 == ckpt.size(), FormatError, "adapter checkpoint holds unpaired tensors");
  return out;
}

AdapterSet negated(const AdapterSet& adapters) {
  AdapterSet out = adapters;
  for (auto& a : out) a.B = ops::scale(a.B, -1.0);
  return out;
}

}  // namespace vibekit::lora
