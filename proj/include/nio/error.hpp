// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace nio {

enum class ErrorCode {
  invalid_argument = 1,
  shape_mismatch = 2,
  dtype_mismatch = 3,
  not_on_tape = 4,
  io = 5,
  format = 6,
  numeric = 7,
};

/// Exception type thrown by every module of the library. The C API maps the
/// code onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nio
