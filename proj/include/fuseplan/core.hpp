// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace fuseplan {

enum class Direction : std::uint8_t { kForward = 0, kBackward = 1 };

// Decoder-only transformer dimensions; the subset that drives the analytical
// cost model.
struct ModelSpec {
  std::string name;
  int num_layers = 0;
  int num_heads = 0;
  int hidden_size = 0;
  int intermediate_size = 0;
};

// dp * pp * tp GPUs total. tp must be a power of two and fit on one node.
struct ParallelStrategy {
  int dp = 1;
  int pp = 1;
  int tp = 1;

  int gpus() const { return dp * pp * tp; }
};

struct CostModel {
  // Seconds per (parameter * token) on a single GPU. Stage latency scales
  // linearly in per-stage parameter count, token count and micro-batch size;
  // callers divide by the size of the executing GPU group.
  double time_per_token_coeff = 1e-12;
  double backward_forward_ratio = 2.0;
  // Bytes stashed per (hidden unit * token * layer) of an in-flight
  // micro-batch.
  double activation_bytes_coeff = 1.0;
  // Seconds per decode step while the instance batch is at or below bs_max.
  double decode_step_base = 0.01;
  // Bytes per second for weight redistribution between workflow stages.
  double comm_bandwidth = 1e9;
};

struct ClusterSpec {
  int num_gpus = 0;
  int gpus_per_node = 8;
  // Activation budget per pipeline stage in bytes; <= 0 means unbounded.
  double activation_capacity_per_stage = 0.0;
  // KV cache budget of one generation instance in bytes.
  double kv_capacity_per_instance = 0.0;
  // Decode latency plateau: batches up to bs_max decode at decode_step_base.
  int bs_max = 1;
  // Bytes per second for KV cache migration between instances.
  double interconnect_bandwidth = 1e9;
};

// Throw std::invalid_argument on violated invariants.
void validate(const ModelSpec& spec);
void validate(const ParallelStrategy& strat, const ClusterSpec& cluster);
void validate(const CostModel& cost);
void validate(const ClusterSpec& cluster);

double per_layer_params(const ModelSpec& spec);

// Closed form: num_layers * (4*hidden^2 + 2*hidden*intermediate)
//              + 2 * vocab * hidden   (input embedding + output head).
// Attention contributes 4*hidden^2 (Q, K, V, O), the gated MLP
// 2*hidden*intermediate. Norm and bias terms are negligible and omitted.
double estimate_params(const ModelSpec& spec, int vocab_size = 32000);

// Wall-clock seconds for one micro-batch of one pipeline subtask executing on
// a single GPU. `layers_in_stage` may be fractional: per-stage cost is
// proportional to the per-stage parameter share, and layer counts do not
// always divide evenly into stage counts.
double subtask_latency(const ModelSpec& spec, double layers_in_stage, int seq_len,
                       int mb_size, Direction dir, const CostModel& cost);

// Bytes held from the forward pass of one micro-batch until its backward
// completes at the same stage.
double activation_per_microbatch(const ModelSpec& spec, double layers_in_stage,
                                 int seq_len, int mb_size, const CostModel& cost);

// fp16 K and V per token across all layers.
double kv_bytes_per_token(const ModelSpec& spec);

}  // namespace fuseplan
