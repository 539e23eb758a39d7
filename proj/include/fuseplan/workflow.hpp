// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fuseplan/annealer.hpp"
#include "fuseplan/core.hpp"
#include "fuseplan/genfuse.hpp"

namespace fuseplan {

struct TaskSetup {
  ModelSpec model;
  ParallelStrategy strategy;
};

// One RLHF iteration: generation with the actor, scoring passes by the
// reference/reward/critic models, then actor and critic updates per
// mini-batch. The actor/reference pair and the critic/reward pair must be
// size twins.
struct IterationConfig {
  TaskSetup actor;
  TaskSetup ref;
  TaskSetup critic;
  TaskSetup reward;
  int global_batch = 512;
  int mini_batch = 64;
  int prompt_len = 256;
  int max_output_len = 1024;
  LengthDistribution lengths;  // max_len additionally clamped to max_output_len
  ClusterSpec cluster;
  CostModel cost;
  AnnealParams anneal;
  int num_chains = 8;
  double migrate_ratio = 0.2;  // R_t as a fraction of global_batch in fused mode
  // Per stage-switch seconds; < 0 derives weight-redistribution time from
  // model bytes over the cluster-aggregate comm bandwidth plus fixed setup.
  double switch_overhead = -1.0;
  double switch_setup_seconds = 1.0;
  std::uint64_t seed = 0;
};

enum class IterationMode { kBase, kFused };

struct IterationBreakdown {
  double gen_plus_inf = 0.0;
  double train = 0.0;
  double others = 0.0;

  double total() const { return gen_plus_inf + train + others; }
  std::string to_text() const;
};

// base: serial generation then inference, plus per-mini-batch serial 1F1B
// trainings of actor and critic. fused: migrated generation/inference and a
// fused actor+critic schedule searched once and reused for every mini-batch
// (the per-mini-batch latencies are identical, so the schedule is too).
IterationBreakdown simulate_iteration(const IterationConfig& config, IterationMode mode);

// Greedy longest-first packing of sample lengths into dp groups with equal
// target loads; returns sample indices per group. The max group load never
// exceeds sum/dp + max(length).
std::vector<std::vector<int>> balance_minibatch(const std::vector<int>& lengths, int dp);

enum class TaskKind { kTrain, kForward };

struct StrategyWorkload {
  int samples = 512;  // processed per iteration by this task
  int seq_len = 512;
  int microbatch_size = 1;
  double gpu_memory_bytes = 80e9;
  CostModel cost;
};

struct StrategyChoice {
  ParallelStrategy strategy;
  double cost = 0.0;  // predicted seconds per iteration for this task
};

// Brute force over tp in {1,2,4,8} (capped by node size) and pp dividing the
// layer count, dp filling the rest; candidates violating the weight+activation
// memory model are pruned; returns the cheapest (ties: smaller pp, then
// smaller tp). Throws InfeasibleError when nothing fits.
StrategyChoice search_strategy(const ModelSpec& spec, const ClusterSpec& cluster,
                               TaskKind kind, const StrategyWorkload& workload);

}  // namespace fuseplan
