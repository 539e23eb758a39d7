// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fuseplan/core.hpp"

namespace fuseplan {

// Long-tailed output-length model. The lognormal parameters are solved so
// that quantile(0.999)/median == p999_ratio before truncation at max_len.
struct LengthDistribution {
  enum class Kind : std::uint8_t { kLognormal = 0, kEmpirical = 1 };

  Kind kind = Kind::kLognormal;
  double median = 200.0;
  double p999_ratio = 10.0;
  int max_len = 1024;
  std::vector<int> empirical;  // replayed verbatim for Kind::kEmpirical
};

// One token count per line. Throws ConfigError on malformed lines.
std::vector<int> load_length_file(const std::string& path);

// Deterministic per seed. Lognormal draws are clamped to [1, max_len];
// the empirical kind replays the supplied lengths cyclically (seed unused).
std::vector<int> sample_lengths(const LengthDistribution& dist, int n, std::uint64_t seed);

struct GenSample {
  int id = 0;
  int prompt_len = 0;
  int target_output_len = 0;
  int generated = 0;
  double kv_bytes = 0.0;  // reserved for the full target at admission
};

std::vector<GenSample> make_batch(const LengthDistribution& dist, int n, int prompt_len,
                                  const ModelSpec& actor, std::uint64_t seed);

// Forward-only scoring pass (reference, reward or critic) run on the freed
// generation instances; costed by model size over the full sequence.
struct InferenceTask {
  std::string name;
  ModelSpec model;
};

struct GenSimConfig {
  ModelSpec actor;
  int num_instances = 8;
  int instance_gpus = 8;
  std::vector<InferenceTask> tasks;
  ClusterSpec cluster;  // bs_max, kv_capacity_per_instance, interconnect_bandwidth
  CostModel cost;
};

struct GenTimelineEvent {
  double time = 0.0;
  int instance = -1;
  std::string kind;  // admit | finish | trigger | migrate_out | migrate_in | join_inference | gen_end | inf_end
  int sample = -1;
};

// Snapshot of the not-yet-finished samples at the migration trigger.
struct GenState {
  struct Remaining {
    int id = 0;
    int instance = 0;
    double kv_bytes = 0.0;
    int generated = 0;
    int prompt_len = 0;
    bool admitted = false;  // queued samples hold no KV yet
  };

  double time = 0.0;
  std::vector<Remaining> samples;
};

enum class MigrationMechanism : std::uint8_t { kKvTransfer = 0, kRecomputePrefill = 1 };

struct MigrationPlan {
  double trigger_time = 0.0;
  int r_t = 0;
  int m = 0;
  std::vector<int> destinations;  // instance ids, most remaining samples first
  MigrationMechanism mechanism = MigrationMechanism::kKvTransfer;
  std::vector<int> migrated;  // sample ids, ascending
  double overhead = 0.0;
  bool no_op = false;
};

// Pure: m is the larger of the batch and KV constraint ceilings applied to
// r_t, destinations are the top-m instances by remaining count (ties: lower
// id), and the mechanism is whichever of KV transfer and prefill recompute
// costs less. m covering every instance degenerates to a no-op.
MigrationPlan plan_migration(const GenState& state, int r_t, const GenSimConfig& cfg);

struct GenStageResult {
  double gen_end = 0.0;   // last sample finishes generating
  double inf_end = 0.0;   // all scoring work drained
  double total = 0.0;     // == max(gen_end, inf_end)
  MigrationPlan plan;     // default-constructed when never triggered
  bool triggered = false;
  std::vector<double> finish_time;  // per sample id
  std::vector<GenTimelineEvent> events;
};

// Generation runs on every instance (round-robin assignment, KV-gated
// admission, decode latency flat up to bs_max and linear above); scoring
// starts only once generation has fully finished.
GenStageResult simulate_serial(const std::vector<GenSample>& batch, const GenSimConfig& cfg);

// Serial dynamics until the remaining-sample count falls below r_t, then the
// migration plan consolidates the tail onto plan.m instances (which pause
// for plan.overhead); the freed instances score completed samples as they
// stream in. r_t <= 0 reproduces simulate_serial event for event. While the
// consolidated instances stay on the decode plateau, every sample finishes
// no later than its serial finish plus the migration overhead.
GenStageResult simulate_fused(const std::vector<GenSample>& batch, const GenSimConfig& cfg,
                              int r_t);

struct SweepPoint {
  double ratio = 0.0;  // of the batch size
  int r_t = 0;
  double fused_total = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> curve;
  int best_index = -1;  // lowest fused_total, ties to the lower ratio
  double serial_total = 0.0;
};

// Ratios default to 5%..95% in steps of 5%.
SweepResult sweep_threshold(const std::vector<GenSample>& batch, const GenSimConfig& cfg,
                            std::vector<double> ratios = {});

// Line-oriented export: "time instance kind sample" with fixed 9-digit times.
std::string timeline_text(const GenStageResult& result);

}  // namespace fuseplan
