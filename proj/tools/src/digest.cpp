// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vibekit_cli/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <memory>

#include "vibekit/checkpoint.hpp"
#include "vibekit/error.hpp"

namespace vibekit::cli {
namespace {

std::string digest(const void* data, std::size_t len) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int md_len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data, len) != 1 || EVP_DigestFinal_ex(ctx.get(), md.data(), &md_len) != 1) {
    throw Error("sha256: digest computation failed");
  }
  std::string hex;
  hex.reserve(md_len * 2);
  char buf[3];
  for (unsigned int i = 0; i < md_len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) { return digest(bytes.data(), bytes.size()); }

std::string sha256_hex(const std::string& text) { return digest(text.data(), text.size()); }

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_bytes(path)); }

}  // namespace vibekit::cli
