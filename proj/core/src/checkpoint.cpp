// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include <json.hpp>

#include "vibekit/error.hpp"

namespace vibekit {

using ordered_json = nlohmann::ordered_json;

void Checkpoint::set(const std::string& name, Tensor value) {
  auto it = index_.find(name);
  if (it != index_.end()) {
    entries_[it->second].second = std::move(value);
    return;
  }
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(value));
}

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = index_.find(name);
  VIBEKIT_REQUIRE(it != index_.end(), ContractError, "checkpoint has no tensor named '" + name + "'");
  return entries_[it->second].second;
}

Tensor& Checkpoint::get_mut(const std::string& name) {
  auto it = index_.find(name);
  VIBEKIT_REQUIRE(it != index_.end(), ContractError, "checkpoint has no tensor named '" + name + "'");
  return entries_[it->second].second;
}

void Checkpoint::erase(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) return;
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(it->second));
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].first, i);
}

std::string Checkpoint::meta(const std::string& key, const std::string& fallback) const {
  auto it = metadata_.find(key);
  return it == metadata_.end() ? fallback : it->second;
}

Tensor to_storage_precision(const Tensor& t) {
  Tensor out = t;
  for (auto& v : out.data()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

namespace {

constexpr char kMagic[4] = {'V', 'B', 'C', 'P'};
constexpr std::size_t kPrefix = 16;  // magic + version + header length

std::size_t align8(std::size_t n) { return (n + 7) & ~std::size_t{7}; }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::size_t data_start(std::size_t header_len) { return align8(kPrefix + header_len); }

struct Header {
  std::string json;
  std::size_t data_begin;
};

Header split_header(const std::vector<std::uint8_t>& bytes) {
  VIBEKIT_REQUIRE(bytes.size() >= kPrefix && std::memcmp(bytes.data(), kMagic, 4) == 0, FormatError,
                  "not a VBCP file (bad magic)");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  VIBEKIT_REQUIRE(version == vbcp::kVersion, FormatError, "unsupported VBCP version " + std::to_string(version));
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  VIBEKIT_REQUIRE(header_len <= bytes.size() - kPrefix, FormatError, "VBCP header length exceeds file size");
  Header h;
  h.json.assign(reinterpret_cast<const char*>(bytes.data() + kPrefix), static_cast<std::size_t>(header_len));
  h.data_begin = data_start(static_cast<std::size_t>(header_len));
  return h;
}

}  // namespace

namespace vbcp {

std::vector<std::uint8_t> encode(const Checkpoint& ckpt) {
  ordered_json meta = ordered_json::object();
  for (const auto& [k, v] : ckpt.metadata()) meta[k] = v;

  ordered_json tensors = ordered_json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.entries()) {
    const std::size_t nbytes = 4 * t.numel();
    ordered_json entry;
    entry["name"] = name;
    entry["dtype"] = "f32";
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    entry["nbytes"] = nbytes;
    tensors.push_back(std::move(entry));
    offset = align8(offset + nbytes);
  }
  ordered_json header;
  header["metadata"] = std::move(meta);
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.resize(data_start(text.size()), 0);
  const std::size_t base = out.size();
  out.resize(base + offset, 0);

  std::size_t pos = base;
  for (const auto& [name, t] : ckpt.entries()) {
    for (double v : t.data()) {
      const auto f = static_cast<float>(v);
      VIBEKIT_REQUIRE(std::isfinite(f), FormatError,
                      "tensor '" + name + "' holds a value not representable as a finite float");
      const auto bits = std::bit_cast<std::uint32_t>(f);
      for (int i = 0; i < 4; ++i) out[pos++] = static_cast<std::uint8_t>(bits >> (8 * i));
    }
    pos = base + align8(pos - base);
  }
  return out;
}

Checkpoint decode(const std::vector<std::uint8_t>& bytes) {
  const Header h = split_header(bytes);
  ordered_json header;
  try {
    header = ordered_json::parse(h.json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("VBCP header is not valid JSON: ") + e.what());
  }
  VIBEKIT_REQUIRE(header.is_object() && header.contains("metadata") && header.contains("tensors"), FormatError,
                  "VBCP header must hold 'metadata' and 'tensors'");
  VIBEKIT_REQUIRE(h.data_begin <= bytes.size(), FormatError, "VBCP file truncated before data section");
  const std::size_t data_len = bytes.size() - h.data_begin;

  Checkpoint ckpt;
  try {
    for (const auto& [k, v] : header["metadata"].items()) ckpt.metadata()[k] = v.get<std::string>();
    for (const auto& entry : header["tensors"]) {
      const auto name = entry.at("name").get<std::string>();
      VIBEKIT_REQUIRE(entry.at("dtype").get<std::string>() == "f32", FormatError,
                      "tensor '" + name + "': only dtype f32 is supported");
      VIBEKIT_REQUIRE(!ckpt.contains(name), FormatError, "duplicate tensor name '" + name + "'");
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto nbytes = entry.at("nbytes").get<std::size_t>();
      VIBEKIT_REQUIRE(nbytes == 4 * shape_numel(shape), FormatError, "tensor '" + name + "': nbytes disagrees with shape");
      VIBEKIT_REQUIRE(offset % 8 == 0, FormatError, "tensor '" + name + "': offset not 8-byte aligned");
      VIBEKIT_REQUIRE(offset <= data_len && nbytes <= data_len - offset, FormatError,
                      "tensor '" + name + "': data range outside file");
      Tensor t(shape);
      const std::uint8_t* p = bytes.data() + h.data_begin + offset;
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(std::bit_cast<float>(get_u32(p + 4 * i)));
      ckpt.set(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed VBCP header: ") + e.what());
  }
  return ckpt;
}

void write_file(const std::filesystem::path& path, const Checkpoint& ckpt) { write_bytes_atomic(path, encode(ckpt)); }

Checkpoint read_file(const std::filesystem::path& path) { return decode(read_bytes(path)); }

std::string header_json(const std::vector<std::uint8_t>& bytes) {
  const Header h = split_header(bytes);
  try {
    return ordered_json::parse(h.json).dump(2) + "\n";
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("VBCP header is not valid JSON: ") + e.what());
  }
}

}  // namespace vbcp

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  VIBEKIT_REQUIRE(in.good(), FormatError, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(std::random_device{}());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    VIBEKIT_REQUIRE(out.good(), FormatError, "cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    VIBEKIT_REQUIRE(out.good(), FormatError, "short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace vibekit
