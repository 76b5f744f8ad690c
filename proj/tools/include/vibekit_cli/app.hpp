// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "vibekit/error.hpp"

namespace vibekit::cli {

/// Process exit status of `vibekit`. Listed in --help.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,           // bad flags or unknown subcommand
  kExitConfig = 3,          // config schema or validation failure
  kExitMissingInput = 4,    // an input file does not exist
  kExitFormat = 5,          // unreadable or malformed VBCP input
  kExitRelayViolation = 6,  // composing LoRA2 onto stage-1-merged weights
  kExitNumeric = 7,         // divergence or other non-finite state
  kExitContract = 8,        // inputs violate an operation's shape or value contract
};

class MissingInput : public Error {
 public:
  using Error::Error;
};

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vibekit::cli
