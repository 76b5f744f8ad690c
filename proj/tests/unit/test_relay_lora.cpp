// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vibekit/checkpoint.hpp"
#include "vibekit/error.hpp"
#include "vibekit/ops.hpp"
#include "vibekit/relay.hpp"
#include "vibekit/relay_lora.hpp"
#include "vibekit/rng.hpp"
#include "vibekit_cli/digest.hpp"

namespace vibekit {
namespace {

namespace fs = std::filesystem;
using lora::AdapterSet;
using lora::LoRAAdapter;

const fs::path kFixtures = VIBEKIT_FIXTURE_DIR;

LoRAAdapter hand_adapter(const std::string& target = "w") {
  return {target, Tensor::matrix({{3, 4}}), Tensor::matrix({{1}, {2}}), 1, 2.0};
}

Checkpoint random_checkpoint(Rng& rng, std::size_t d_out = 6, std::size_t d_in = 5) {
  Checkpoint c;
  c.metadata()["stage"] = "base";
  c.set("a", to_storage_precision(gaussian({d_out, d_in}, rng)));
  c.set("b", to_storage_precision(gaussian({d_out, d_in}, rng, 3.0)));
  c.set("other", to_storage_precision(gaussian({4}, rng)));
  return c;
}

AdapterSet random_adapters(Rng& rng, std::size_t d_out = 6, std::size_t d_in = 5) {
  AdapterSet s;
  for (const char* t : {"a", "b"}) {
    LoRAAdapter a = lora::init_adapter(t, d_in, d_out, 2, 2.0, rng);
    a.B = gaussian({d_out, 2}, rng, 0.5);
    s.push_back(a);
  }
  return s;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Delta, FreshAdapterIsZero) {
  Rng rng(0);
  const LoRAAdapter a = lora::init_adapter("w", 5, 7, 3, 3.0, rng);
  EXPECT_EQ(lora::delta(a), Tensor({7, 5}));
  EXPECT_EQ(a.A.shape(), (Shape{3, 5}));
  EXPECT_EQ(a.B.shape(), (Shape{7, 3}));
}

TEST(Delta, InitVarianceIsOneOverRank) {
  Rng rng(1);
  const LoRAAdapter a = lora::init_adapter("w", 2000, 4, 4, 4.0, rng);
  EXPECT_NEAR(ops::mean_square(a.A), 0.25, 0.01);
}

TEST(Delta, HandExample) { EXPECT_EQ(lora::delta(hand_adapter()), Tensor::matrix({{6, 8}, {12, 16}})); }

TEST(Delta, UnitScaleIsPlainProduct) {
  Rng rng(2);
  LoRAAdapter a{"w", gaussian({3, 4}, rng), gaussian({5, 3}, rng), 3, 3.0};
  EXPECT_EQ(lora::delta(a), ops::matmul(a.B, a.A));
}

TEST(Delta, LinearInAlphaAndB) {
  Rng rng(3);
  LoRAAdapter a{"w", gaussian({2, 4}, rng), gaussian({5, 2}, rng), 2, 1.5};
  LoRAAdapter a2 = a;
  a2.alpha = 3.0;
  LoRAAdapter b2 = a;
  b2.B = ops::scale(a.B, 2.0);
  const Tensor twice = ops::scale(lora::delta(a), 2.0);
  EXPECT_LT(max_abs_diff(lora::delta(a2), twice), 1e-12);
  EXPECT_LT(max_abs_diff(lora::delta(b2), twice), 1e-12);
}

TEST(Delta, RejectsInconsistentFactors) {
  LoRAAdapter bad = hand_adapter();
  bad.B = Tensor({2, 2});
  EXPECT_THROW(lora::delta(bad), ShapeError);
  Rng rng(4);
  EXPECT_THROW(lora::init_adapter("w", 3, 8, 4, 4.0, rng), ContractError);
}

TEST(Merge, EmptySetIsIdentity) {
  Rng rng(5);
  const Checkpoint c = random_checkpoint(rng);
  EXPECT_EQ(lora::merge(c, {}), c);
  EXPECT_EQ(lora::strip(c, {}), c);
}

TEST(Merge, HandExampleOnZeroBase) {
  Checkpoint base;
  base.set("w", Tensor({2, 2}));
  const Checkpoint m = lora::merge(base, {hand_adapter()});
  EXPECT_EQ(m.get("w"), Tensor::matrix({{6, 8}, {12, 16}}));
  EXPECT_EQ(m.meta("stage"), "merged");
  EXPECT_EQ(m.meta("merge.1.targets"), "w");
}

TEST(Merge, NegatedAdapterUndoesMerge) {
  Rng rng(6);
  const Checkpoint c = random_checkpoint(rng);
  const AdapterSet s = random_adapters(rng);
  const Checkpoint back = lora::merge(lora::merge(c, s), lora::negated(s));
  for (const auto& [name, t] : c.entries()) EXPECT_LT(max_abs_diff(back.get(name), t), 1e-12);
}

TEST(Merge, LeavesOtherTensorsUntouched) {
  Rng rng(7);
  const Checkpoint c = random_checkpoint(rng);
  AdapterSet s = random_adapters(rng);
  s.pop_back();
  const Checkpoint m = lora::merge(c, s);
  EXPECT_EQ(m.get("b"), c.get("b"));
  EXPECT_EQ(m.get("other"), c.get("other"));
  EXPECT_NE(m.get("a"), c.get("a"));
}

TEST(Merge, Errors) {
  Checkpoint base;
  base.set("w", Tensor({2, 3}));
  EXPECT_THROW(lora::merge(base, {hand_adapter()}), ShapeError);
  EXPECT_THROW(lora::merge(base, {hand_adapter("missing")}), ContractError);
}

TEST(Strip, RoundTripIsBitIdentical) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed, 31);
    const Checkpoint w = random_checkpoint(rng, 16, 16);
    const AdapterSet s = random_adapters(rng, 16, 16);
    EXPECT_EQ(lora::strip(lora::merge(w, s), s), w) << "seed " << seed;
  }
}

TEST(Strip, RoundTripThroughStorage) {
  Rng rng(8);
  const Checkpoint w = random_checkpoint(rng);
  const AdapterSet s = random_adapters(rng);
  const Checkpoint stored = vbcp::decode(vbcp::encode(lora::merge(w, s)));
  const Checkpoint back = lora::strip(stored, s);
  for (const auto& [name, t] : w.entries())
    for (std::size_t i = 0; i < t.numel(); ++i)
      EXPECT_LE(std::abs(back.get(name)[i] - t[i]), 1e-6 * std::max(1.0, std::abs(t[i])));
}

TEST(Strip, WrongBaseLeavesBaseDifference) {
  Rng rng(9);
  const Checkpoint w = random_checkpoint(rng);
  Checkpoint other = random_checkpoint(rng);
  const AdapterSet s = random_adapters(rng);
  const Checkpoint residual = lora::strip(lora::merge(w, s), s);
  for (const char* n : {"a", "b"})
    EXPECT_LT(max_abs_diff(ops::sub(residual.get(n), other.get(n)), ops::sub(w.get(n), other.get(n))), 1e-12);
}

TEST(Strip, RestoresMetadataAfterNestedMerges) {
  Rng rng(10);
  const Checkpoint w = random_checkpoint(rng);
  const AdapterSet s1 = random_adapters(rng), s2 = random_adapters(rng);
  const Checkpoint m2 = lora::merge(lora::merge(w, s1), s2);
  EXPECT_EQ(m2.meta("merge_depth"), "2");
  EXPECT_EQ(lora::strip(lora::strip(m2, s2), s1).metadata(), w.metadata());
}

TEST(Compose, ZeroAdapterGivesBaseWeights) {
  Rng rng(11);
  const Checkpoint w = random_checkpoint(rng);
  AdapterSet s = random_adapters(rng);
  for (auto& a : s) a.B = Tensor(a.B.shape());
  const Checkpoint inf = lora::compose_inference(w, s);
  for (const auto& [name, t] : w.entries()) EXPECT_EQ(inf.get(name), t);
  EXPECT_EQ(inf.meta("stage"), "inference");
}

TEST(Compose, SameArithmeticAsMerge) {
  Checkpoint base;
  base.set("w", Tensor({2, 2}));
  base.set("untouched", Tensor::vector({1, 2, 3}));
  const Checkpoint inf = lora::compose_inference(base, {hand_adapter()});
  EXPECT_EQ(inf.get("w"), Tensor::matrix({{6, 8}, {12, 16}}));
  EXPECT_EQ(inf.get("untouched"), base.get("untouched"));
}

TEST(Compose, RelayGuardRejectsMergedBase) {
  Rng rng(12);
  const Checkpoint w = random_checkpoint(rng);
  const AdapterSet s = random_adapters(rng);
  const Checkpoint w1 = lora::merge(w, s);
  try {
    lora::compose_inference(w1, s);
    FAIL() << "expected RelayViolation";
  } catch (const RelayViolation& e) {
    EXPECT_EQ(std::string(e.what()).rfind("relay violation", 0), 0u);
  }
  const Checkpoint stored = vbcp::decode(vbcp::encode(w1));
  EXPECT_THROW(lora::compose_inference(stored, s), RelayViolation);
}

TEST(AdapterCheckpoint, RoundTripsThroughVbcp) {
  Rng rng(13);
  AdapterSet s = random_adapters(rng);
  for (auto& a : s) {
    a.A = to_storage_precision(a.A);
    a.B = to_storage_precision(a.B);
  }
  const Checkpoint packed = lora::adapters_to_checkpoint(s, "lora2");
  EXPECT_TRUE(packed.contains("a.lora_A"));
  EXPECT_TRUE(packed.contains("b.lora_B"));
  EXPECT_EQ(packed.meta("lora_rank"), "2");
  EXPECT_EQ(packed.meta("lora_alpha"), "2");
  const AdapterSet back = lora::adapters_from_checkpoint(vbcp::decode(vbcp::encode(packed)));
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(back[i].target_name, s[i].target_name);
    EXPECT_EQ(back[i].A, s[i].A);
    EXPECT_EQ(back[i].B, s[i].B);
    EXPECT_EQ(back[i].alpha, s[i].alpha);
  }
}

TEST(AdapterCheckpoint, RejectsUnpairedFactors) {
  Checkpoint c = lora::adapters_to_checkpoint({hand_adapter()}, "lora1");
  c.erase("w.lora_B");
  EXPECT_THROW(lora::adapters_from_checkpoint(c), FormatError);
}

TEST(Relay, ZeroStepsGiveZeroDeltaAndBaseInference) {
  relay::RelayConfig cfg = relay::default_relay_config(0);
  cfg.stage1.steps = 0;
  cfg.stage2.steps = 0;
  const relay::RelayResult r = relay::relay_protocol(cfg);
  for (const auto& a : r.lora2) EXPECT_EQ(lora::delta(a), Tensor({a.d_out(), a.d_in()}));
  const Checkpoint inf = lora::compose_inference(r.base, r.lora2);
  for (const auto& [name, t] : r.base.entries()) EXPECT_EQ(inf.get(name), t);
}

TEST(Relay, StageOneChangesExactlyTheTargets) {
  relay::RelayConfig cfg = relay::default_relay_config(0);
  cfg.stage1.steps = 3;
  cfg.stage1.lora_targets = {"q", "ffn.2"};
  cfg.stage2.steps = 0;
  const relay::RelayResult r = relay::relay_protocol(cfg);
  for (const auto& [name, t] : r.base.entries()) {
    const bool targeted = name.ends_with(".attn.q") || name.ends_with(".ffn.2");
    EXPECT_EQ(r.merged.get(name) != t, targeted) << name;
  }
  EXPECT_TRUE(lora::has_merged_adapter(r.merged));
  EXPECT_THROW(lora::compose_inference(r.merged, r.lora2), RelayViolation);
}

// ---- VBCP ----

TEST(Vbcp, RoundTripIsBitIdentical) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed, 41);
    Checkpoint c = random_checkpoint(rng);
    c.set("odd", to_storage_precision(gaussian({3}, rng)));
    c.set("neg_zero", Tensor::vector({-0.0}));
    c.metadata()["note"] = "x\"y\\z";
    const auto bytes = vbcp::encode(c);
    const Checkpoint back = vbcp::decode(bytes);
    EXPECT_EQ(back, c);
    EXPECT_TRUE(std::signbit(back.get("neg_zero")[0]));
    EXPECT_EQ(vbcp::encode(back), bytes);
  }
}

TEST(Vbcp, StorageRoundsToNearestFloat) {
  Checkpoint c;
  c.set("x", Tensor::vector({0.1, 1.0 + std::ldexp(1.0, -24), 1.0 + 3 * std::ldexp(1.0, -24)}));
  const Checkpoint back = vbcp::decode(vbcp::encode(c));
  EXPECT_EQ(back.get("x")[0], static_cast<double>(0.1f));
  EXPECT_EQ(back.get("x")[1], 1.0);                           // tie to even
  EXPECT_EQ(back.get("x")[2], 1.0 + std::ldexp(1.0, -22));  // tie to even, upward
}

TEST(Vbcp, LayoutIsAligned) {
  Checkpoint c;
  c.set("a", Tensor::vector({1, 2, 3}));
  c.set("b", Tensor::vector({4}));
  const auto bytes = vbcp::encode(c);
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(std::memcmp(bytes.data(), "VBCP", 4), 0);
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | bytes[8 + i];
  const std::size_t data_start = (16 + header_len + 7) / 8 * 8;
  EXPECT_EQ(bytes.size(), data_start + 16 + 8);
  float f;
  std::memcpy(&f, bytes.data() + data_start + 16, 4);
  EXPECT_EQ(f, 4.0f);
}

TEST(Vbcp, RejectsNonFiniteValues) {
  Checkpoint c;
  c.set("x", Tensor::vector({1e300}));
  EXPECT_THROW(vbcp::encode(c), FormatError);
}

std::vector<std::uint8_t> raw_file(const std::string& header, std::size_t data_bytes, std::uint32_t version = 1) {
  std::vector<std::uint8_t> out{'V', 'B', 'C', 'P'};
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(version >> (8 * i)));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(header.size()) >> (8 * i)));
  out.insert(out.end(), header.begin(), header.end());
  out.resize((out.size() + 7) / 8 * 8 + data_bytes, 0);
  return out;
}

TEST(Vbcp, DecodeValidatesEverything) {
  const std::string ok = R"({"metadata":{},"tensors":[{"name":"a","dtype":"f32","shape":[2],"offset":0,"nbytes":8}]})";
  EXPECT_NO_THROW(vbcp::decode(raw_file(ok, 8)));
  auto bad_magic = raw_file(ok, 8);
  bad_magic[0] = 'X';
  EXPECT_THROW(vbcp::decode(bad_magic), FormatError);
  EXPECT_THROW(vbcp::decode(raw_file(ok, 8, 2)), FormatError);
  EXPECT_THROW(vbcp::decode(raw_file(ok, 4)), FormatError);
  EXPECT_THROW(vbcp::decode(raw_file("{not json", 0)), FormatError);
  EXPECT_THROW(vbcp::decode(raw_file(R"({"metadata":{}})", 0)), FormatError);
  EXPECT_THROW(
      vbcp::decode(raw_file(R"({"metadata":{},"tensors":[{"name":"a","dtype":"f64","shape":[1],"offset":0,"nbytes":8}]})", 8)),
      FormatError);
  EXPECT_THROW(
      vbcp::decode(raw_file(R"({"metadata":{},"tensors":[{"name":"a","dtype":"f32","shape":[2],"offset":0,"nbytes":4}]})", 8)),
      FormatError);
  EXPECT_THROW(
      vbcp::decode(raw_file(R"({"metadata":{},"tensors":[{"name":"a","dtype":"f32","shape":[1],"offset":4,"nbytes":4}]})", 8)),
      FormatError);
  EXPECT_THROW(vbcp::decode(raw_file(R"({"metadata":{},"tensors":[{"name":"a","dtype":"f32","shape":[1],"offset":0,"nbytes":4},)"
                                     R"({"name":"a","dtype":"f32","shape":[1],"offset":8,"nbytes":4}]})",
                                     16)),
               FormatError);
  EXPECT_THROW(vbcp::decode(raw_file(R"({"metadata":{"k":3},"tensors":[]})", 0)), FormatError);
  std::vector<std::uint8_t> truncated = raw_file(ok, 8);
  truncated.resize(10);
  EXPECT_THROW(vbcp::decode(truncated), FormatError);
}

TEST(Vbcp, AtomicWriteLeavesNoTemporaries) {
  const fs::path dir = fs::temp_directory_path() / "vibekit_vbcp_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Checkpoint c;
  c.set("x", Tensor::vector({1, 2}));
  vbcp::write_file(dir / "c.vbcp", c);
  vbcp::write_file(dir / "c.vbcp", c);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.is_regular_file();
  EXPECT_EQ(files, 1u);
  EXPECT_EQ(vbcp::read_file(dir / "c.vbcp"), c);
  fs::remove_all(dir);
}

// ---- golden fixtures written by tests/fixtures/make_fixtures.py ----

class Golden : public ::testing::TestWithParam<const char*> {};

TEST_P(Golden, RoundTripsBitIdentically) {
  const auto bytes = read_bytes(kFixtures / (std::string(GetParam()) + ".vbcp"));
  EXPECT_EQ(vbcp::encode(vbcp::decode(bytes)), bytes);
}

TEST_P(Golden, HeaderMatchesGoldenText) {
  const auto bytes = read_bytes(kFixtures / (std::string(GetParam()) + ".vbcp"));
  EXPECT_EQ(vbcp::header_json(bytes), read_text(kFixtures / (std::string(GetParam()) + ".inspect.txt")));
}

TEST_P(Golden, DigestMatchesManifest) {
  const std::string name = std::string(GetParam()) + ".vbcp";
  std::istringstream sums(read_text(kFixtures / "SHA256SUMS"));
  std::string digest, file;
  bool found = false;
  while (sums >> digest >> file) {
    if (file != name) continue;
    found = true;
    EXPECT_EQ(cli::sha256_hex(read_bytes(kFixtures / name)), digest);
  }
  EXPECT_TRUE(found);
}

INSTANTIATE_TEST_SUITE_P(Fixtures, Golden, ::testing::Values("adapter_small", "empty", "base_tiny"));

TEST(GoldenContent, AdapterFixtureDecodesToKnownValues) {
  const Checkpoint c = vbcp::read_file(kFixtures / "adapter_small.vbcp");
  EXPECT_EQ(c.get("bias"), Tensor::vector({static_cast<float>(0.1), -2.5, static_cast<float>(1e-3)}));
  const AdapterSet s = [&] {
    Checkpoint only = c;
    only.erase("bias");
    return lora::adapters_from_checkpoint(only);
  }();
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].target_name, "blocks.0.attn.q");
  EXPECT_EQ(lora::delta(s[0]), Tensor::matrix({{6, 8}, {12, 16}}));
}

TEST(Digest, KnownVectors) {
  EXPECT_EQ(cli::sha256_hex(std::string("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(cli::sha256_hex(std::string("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace vibekit
