// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

namespace fuseplan {

// Malformed or inconsistent user input (config files, flag values).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally sound input that admits no solution (layouts that cannot
// tile, capacities that cannot hold a single micro-batch, ...).
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fuseplan
