// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "fuseplan/numerics.hpp"

#include <stdexcept>

namespace fuseplan {

namespace {

std::vector<double> td_deltas(const GaeInputs& in) {
  if (in.rewards.empty() || in.values.size() != in.rewards.size() + 1) {
    throw std::invalid_argument("GaeInputs: need T >= 1 rewards and T+1 values");
  }
  if (in.gamma < 0.0 || in.gamma > 1.0 || in.lam < 0.0 || in.lam > 1.0) {
    throw std::invalid_argument("GaeInputs: gamma and lam must lie in [0, 1]");
  }
  std::vector<double> delta(in.rewards.size());
  for (std::size_t t = 0; t < delta.size(); ++t) {
    delta[t] = in.rewards[t] + in.gamma * in.values[t + 1] - in.values[t];
  }
  return delta;
}

}  // namespace

std::vector<double> gae_recursive(const GaeInputs& in) {
  std::vector<double> adv = td_deltas(in);
  const double decay = in.gamma * in.lam;
  for (std::size_t t = adv.size() - 1; t-- > 0;) {
    adv[t] += decay * adv[t + 1];
  }
  return adv;
}

std::vector<double> gae_matrix(const GaeInputs& in) {
  const std::vector<double> delta = td_deltas(in);
  const double decay = in.gamma * in.lam;
  const std::size_t n = delta.size();
  std::vector<double> adv(n);
  // Row t of U streamed left to right: U[t][k] = decay^(k-t).
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    double acc = 0.0;
    for (std::size_t k = t; k < n; ++k) {
      acc += weight * delta[k];
      weight *= decay;
    }
    adv[t] = acc;
  }
  return adv;
}

}  // namespace fuseplan
