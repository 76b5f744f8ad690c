// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "vibekit_cli/app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vibekit::cli::run(args, std::cout, std::cerr);
}
