// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vibekit/tensor.hpp"

namespace vibekit {

/// Named tensors in insertion order plus a string metadata map.
///
/// Values are held as doubles; on disk (VBCP) every tensor is 32-bit float.
class Checkpoint {
 public:
  using Entry = std::pair<std::string, Tensor>;

  /// Inserts a new name at the end or replaces an existing tensor in place.
  void set(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get_mut(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  void erase(const std::string& name);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  std::string meta(const std::string& key, const std::string& fallback = "") const;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.entries_ == b.entries_ && a.metadata_ == b.metadata_;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::string> metadata_;
};

// VBCP layout, all integers little-endian:
//
//   "VBCP" | u32 version (1) | u64 header_len | header_len bytes of UTF-8 JSON
//   | zero padding to an 8-byte boundary | data section
//
// The header is {"metadata":{...},"tensors":[{"name","dtype":"f32","shape",
// "offset","nbytes"}, ...]} with offsets relative to the start of the data
// section. Every tensor starts on an 8-byte boundary; gaps are zero-filled.
namespace vbcp {

inline constexpr std::uint32_t kVersion = 1;

/// Serialised bytes of a checkpoint. Values are rounded to float (nearest-even);
/// a value outside float range is a FormatError.
std::vector<std::uint8_t> encode(const Checkpoint& ckpt);
Checkpoint decode(const std::vector<std::uint8_t>& bytes);

/// Writes through a temporary file in the same directory, then renames.
void write_file(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_file(const std::filesystem::path& path);

/// The stored JSON header, pretty-printed with two-space indentation and a trailing newline.
std::string header_json(const std::vector<std::uint8_t>& bytes);

}  // namespace vbcp

/// Rounds every element to the nearest float, the precision a VBCP round trip preserves.
Tensor to_storage_precision(const Tensor& t);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
/// Atomic replace: temp file + rename.
void write_bytes_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace vibekit
