// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fuseplan/core.hpp"

namespace fuseplan {

// Geometry of one fused block after the problem transformation.
//
// Two training pipelines share one device pool. The pipeline with the
// smaller tensor-parallel degree has runs of `s` consecutive stages merged so
// that every merged stage occupies the same `stage_gpus` GPUs. The block then
// holds k1 pipeline groups of model A (n1 stages each, forward direction) and
// k2 groups of model B (n2 stages each, reversed direction):
//
//      physical stage   0   1   2   3   4   5   6   7        (n1=8, n2=4)
//      model A group 0  a0  a1  a2  a3  a4  a5  a6  a7
//      model B group 0  b3  b2  b1  b0                        (reversed)
//      model B group 1                  b3  b2  b1  b0
//
// k1*n1 == k2*n2 == num_stages with k1, k2 coprime, and k1*m1 == k2*m2 so
// both models cover the same global batch.
//
// Every stage hosts exactly one chunk of each model: 2*m1 model-A subtasks
// and 2*m2 model-B subtasks. A schedule assigns each stage an execution
// order over its hosted subtasks; subtask ids are fixed per stage so row i of
// any schedule is a permutation of ids [i*row_width(), (i+1)*row_width()).
struct FusionLayout {
  int num_stages = 0;
  int n1 = 0, n2 = 0;
  int k1 = 0, k2 = 0;
  int m1 = 0, m2 = 0;
  int s = 1;
  int stage_gpus = 1;
  int num_blocks = 1;
  std::array<double, 2> model_params = {0.0, 0.0};
  std::array<std::string, 2> model_names;
  double activation_capacity = 0.0;  // bytes per stage; <= 0 means unbounded

  // Indexed by logical stage of the owning model (size n1 resp. n2).
  std::array<std::vector<double>, 2> fwd_latency;
  std::array<std::vector<double>, 2> bwd_latency;
  std::array<std::vector<double>, 2> activation;

  int row_width() const { return 2 * (m1 + m2); }
  int total_subtasks() const { return num_stages * row_width(); }

  int stage_of(int id) const { return id / row_width(); }
  int model_of(int id) const { return id % row_width() >= 2 * m1 ? 1 : 0; }
  int microbatch_of(int id) const {
    const int local = id % row_width();
    return (local >= 2 * m1 ? local - 2 * m1 : local) / 2;
  }
  Direction dir_of(int id) const {
    return (id & 1) ? Direction::kBackward : Direction::kForward;
  }
  int group_at(int stage, int model) const { return model == 0 ? stage / n1 : stage / n2; }
  int logical_at(int stage, int model) const {
    return model == 0 ? stage % n1 : n2 - 1 - stage % n2;
  }
  int microbatches(int model) const { return model == 0 ? m1 : m2; }

  // Derived per-subtask tables; call after the geometry fields are set.
  // latency/act_delta are flat over ids; dep holds the unique data
  // dependency of each subtask (or -1).
  std::vector<std::int32_t> dep;
  std::vector<double> latency;
  std::vector<double> act_delta;
  void build_tables();
};

// One execution order per physical stage.
struct FusedSchedule {
  std::vector<std::vector<std::int32_t>> rows;

  bool operator==(const FusedSchedule& o) const { return rows == o.rows; }
};

enum class ViolationKind : std::uint8_t {
  kNone = 0,
  kMalformed,       // row is not a permutation of its hosted subtasks
  kDataDependency,  // a backward precedes its own forward at the turnaround
  kDeadlock,        // cross-stage ordering cycle
  kMemory,          // peak activation exceeds the per-stage capacity
};

struct Verdict {
  ViolationKind kind = ViolationKind::kNone;
  std::string detail;

  explicit operator bool() const { return kind == ViolationKind::kNone; }
};

// Maps both training jobs onto one fused block. seq_len is the trained
// sequence length driving latencies and activation sizes. Throws
// InfeasibleError when the strategies cannot tile a fused block and
// std::invalid_argument on malformed input.
FusionLayout transform_problem(const ModelSpec& spec_a, const ParallelStrategy& strat_a,
                               const ModelSpec& spec_b, const ParallelStrategy& strat_b,
                               int global_batch, int microbatch_size, int seq_len,
                               const ClusterSpec& cluster, const CostModel& cost);

Verdict check_valid(const FusedSchedule& s, const FusionLayout& layout);

// Finish-time evaluation with reusable buffers; the annealer calls this once
// per candidate neighbor. evaluate() returns false on a dependency cycle.
class ScheduleEvaluator {
 public:
  explicit ScheduleEvaluator(const FusionLayout& layout);

  bool evaluate(const FusedSchedule& s);

  double energy() const { return energy_; }
  const std::vector<double>& finish() const { return finish_; }
  double start_of(int id) const { return finish_[id] - layout_->latency[id]; }

 private:
  const FusionLayout* layout_;
  double energy_ = 0.0;
  std::vector<double> finish_;
  std::vector<std::int32_t> pred_;
  std::vector<std::int32_t> stack_;
  std::vector<std::uint8_t> color_;
};

// Makespan of a valid schedule: every subtask finishes at
//   max(finish(intra-stage predecessor), finish(data dependency)) + latency
// and the energy is the latest finish across stages. Each subtask is
// evaluated exactly once. Throws std::invalid_argument on invalid schedules.
double compute_energy(const FusedSchedule& s, const FusionLayout& layout);

// Peak stashed activation bytes per stage. Counting follows execution order:
// a forward acquires its activation at start, the matching backward releases
// it at end, so the row order fully determines per-stage peaks.
std::vector<double> peak_memory(const FusedSchedule& s, const FusionLayout& layout);

// Baseline: run model A's groups with canonical 1F1B, then model B's.
double serial_1f1b_of_both(const FusionLayout& layout);

// Per-stage peak of that serial baseline: a stage holding logical stage l
// keeps min(n - l, m) activations at its 1F1B high-water mark, and the two
// models never overlap.
std::vector<double> serial_1f1b_peak_memory(const FusionLayout& layout);

}  // namespace fuseplan
