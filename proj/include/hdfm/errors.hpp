// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hdfm {

// Bad command line or config input. The CLI maps this to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad data, a failed invariant, a malformed file, training divergence.
// The CLI maps this to exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure (cannot open, cannot write).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hdfm
