// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vibekit::cli {

/// Lower-case hex SHA-256.
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace vibekit::cli
