// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace fuseplan {

// One rollout of T steps. values carries the bootstrap estimate V_T at the
// end (length T+1), so terminal handling is explicit.
struct GaeInputs {
  std::vector<double> rewards;  // r_0 .. r_{T-1}
  std::vector<double> values;   // V_0 .. V_T
  double gamma = 0.99;
  double lam = 0.95;
};

// Backward one-pass recursion:
//   delta_t = r_t + gamma*V_{t+1} - V_t
//   A_{T-1} = delta_{T-1};  A_t = delta_t + gamma*lam*A_{t+1}
std::vector<double> gae_recursive(const GaeInputs& in);

// Unrolled form A = U * delta with U upper triangular, U[t][k] = (gamma*lam)^(k-t).
// Mathematically identical to the recursion but associates floating point the
// opposite way, so agreement between the two is a strong cross-check.
std::vector<double> gae_matrix(const GaeInputs& in);

}  // namespace fuseplan
