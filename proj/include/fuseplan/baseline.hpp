// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "fuseplan/core.hpp"
#include "fuseplan/rational.hpp"

namespace fuseplan {

struct TraceEntry {
  int stage = 0;
  int microbatch = 0;
  int chunk = 0;  // model chunk for interleaved schedules, 0 otherwise
  Direction dir = Direction::kForward;
  double start = 0.0;
  double end = 0.0;
};

// Entries are sorted by (stage, start) and never overlap within a stage.
struct PipelineTaskTrace {
  int num_stages = 0;
  int num_microbatches = 0;
  int chunks_per_stage = 1;
  std::vector<TraceEntry> entries;

  double makespan() const;
  double busy_time(int stage) const;

  // (makespan - busy) / makespan of stage 0, exact. Requires integer-valued
  // latencies so that every event time is an exactly represented integer.
  Rational measured_bubble(int stage = 0) const;
};

// Uniform-latency pipeline bubble fraction (N-1)/(N-1 + K*M).
Rational bubble_fraction(int num_stages, int num_microbatches, int chunks_per_stage = 1);

// One-forward-one-backward schedule. Stage i admits min(N-i, M) forward
// micro-batches before its first backward, then strictly alternates, then
// drains. fwd/bwd give per-stage latencies (size N).
//
//   stage 0  F0 F1 F2 F3 ........ B0 .. B1 .. B2 .. B3
//   stage 1     F0 F1 F2 .. B0 F3 B1 .. B2 .. B3
//   stage 2        F0 F1 B0 F2 B1 F3 B2 .. B3
//   stage 3           F0 B0 F1 B1 F2 B2 F3 B3
//
PipelineTaskTrace schedule_1f1b(int num_stages, int num_microbatches,
                                const std::vector<double>& fwd,
                                const std::vector<double>& bwd);

// Interleaved schedule with K model chunks per stage; chunk c on stage i is
// logical stage c*N + i of an N*K-deep pipeline, and fwd[i]/K is the
// per-chunk latency. K == 1 reduces exactly to schedule_1f1b. For K > 1 the
// micro-batch count must be a multiple of N (the schedule is undefined
// otherwise, and no valid schedule can reach the (N-1)/(N-1+K*M) bubble).
PipelineTaskTrace schedule_interleaved(int num_stages, int num_microbatches,
                                       int chunks_per_stage,
                                       const std::vector<double>& fwd,
                                       const std::vector<double>& bwd);

}  // namespace fuseplan
