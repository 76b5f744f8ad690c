// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace vibekit {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: non-finite state, an all-masked softmax row, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable checkpoint / config input.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Inference composition attempted on weights that already carry a merged stage-1 adapter.
class RelayViolation : public Error {
 public:
  using Error::Error;
};

#define VIBEKIT_REQUIRE(cond, ExcType, msg) \
  do {                                      \
    if (!(cond)) throw ExcType(msg);        \
  } while (false)

}  // namespace vibekit
