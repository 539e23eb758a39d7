// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fuseplan/fusion.hpp"
#include "fuseplan/rng.hpp"

namespace fuseplan {

struct AnnealParams {
  double alpha = 0.98;        // geometric cooling rate
  double epsilon = 1e-4;      // stop once T <= epsilon * T0
  int swap_retry_limit = 1000;
  std::uint64_t seed = 0;
};

struct AnnealResult {
  FusedSchedule schedule;
  double energy = 0.0;      // objective of `schedule`: seconds, or bytes for the memory pass
  double makespan = 0.0;    // seconds
  double peak_bytes = 0.0;  // max over stages
  int steps = 0;
  int accepted = 0;
};

// Event-driven list scheduling: whenever a stage is idle it starts the
// highest-priority ready subtask, favoring the larger model, then the smaller
// micro-batch index, then backward over forward. Construction respects the
// activation capacity; throws InfeasibleError if it wedges (capacity smaller
// than a single micro-batch).
FusedSchedule greedy_schedule(const FusionLayout& layout);

// Per-stage completion-time bound, maximized over stages. Each stage
// contributes the larger of
//   - earliest first-task arrival + all hosted work + shortest mandatory
//     tail after its last task, and
//   - per hosted chunk: that chain's arrival + its own work + its tail,
// both of which hold for every valid schedule.
double lower_bound(const FusionLayout& layout);

// One uniformly random adjacent transposition in a uniformly random stage,
// re-drawn until the result is valid. Throws InfeasibleError once
// swap_retry_limit draws failed in a row (frozen state).
FusedSchedule compute_neighbor(const FusedSchedule& s, const FusionLayout& layout, Rng& rng,
                               int swap_retry_limit = 1000);

// Simulated annealing over makespan. T starts at energy(s0) and cools by
// alpha per evaluated neighbor; the best schedule ever seen is returned.
AnnealResult anneal(const FusedSchedule& s0, const FusionLayout& layout,
                    const AnnealParams& params);

// Second annealing pass over peak activation memory. A neighbor is
// admissible only if its makespan does not exceed s0's, so the latency
// objective never regresses. Returns the best (peak, makespan) pair seen.
AnnealResult optimize_memory(const FusedSchedule& s0, const FusionLayout& layout,
                             const AnnealParams& params);

struct SearchReport {
  FusedSchedule best;
  double best_energy = 0.0;
  double best_peak_bytes = 0.0;
  int best_chain = -1;
  double greedy_energy = 0.0;
  double serial_energy = 0.0;
  double lb = 0.0;
  std::vector<double> chain_energies;

  std::string to_text() const;
};

// Runs `num_chains` annealing chains from the greedy schedule with seeds
// derived from params.seed. Chain k's seed does not depend on num_chains, so
// growing the chain count can only improve the result. Ties are broken by
// lower peak memory, then lower chain index.
SearchReport multi_seed_search(const FusionLayout& layout, const AnnealParams& params,
                               int num_chains);

struct OracleResult {
  double energy = 0.0;
  FusedSchedule schedule;
};

// Exact optimum by exhaustive enumeration of valid schedules (backtracking
// over row permutations with incremental cycle pruning). Guarded to
// instances of at most 16 subtasks.
OracleResult exhaustive_oracle(const FusionLayout& layout);

}  // namespace fuseplan
