// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "fuseplan/core.hpp"

#include <cmath>
#include <stdexcept>

#include "fuseplan/rng.hpp"

namespace fuseplan {

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void validate(const ModelSpec& spec) {
  if (spec.name.empty()) throw std::invalid_argument("ModelSpec: empty name");
  if (spec.num_layers <= 0 || spec.num_heads <= 0 || spec.hidden_size <= 0 ||
      spec.intermediate_size <= 0) {
    throw std::invalid_argument("ModelSpec '" + spec.name + "': all dimensions must be positive");
  }
  if (spec.hidden_size % spec.num_heads != 0) {
    throw std::invalid_argument("ModelSpec '" + spec.name + "': hidden_size not divisible by num_heads");
  }
}

void validate(const ParallelStrategy& strat, const ClusterSpec& cluster) {
  if (strat.dp <= 0 || strat.pp <= 0 || strat.tp <= 0) {
    throw std::invalid_argument("ParallelStrategy: dp/pp/tp must be positive");
  }
  if (!is_pow2(strat.tp)) throw std::invalid_argument("ParallelStrategy: tp must be a power of two");
  if (strat.tp > cluster.gpus_per_node) {
    throw std::invalid_argument("ParallelStrategy: tp exceeds gpus_per_node");
  }
  if (strat.gpus() > cluster.num_gpus) {
    throw std::invalid_argument("ParallelStrategy: dp*pp*tp exceeds cluster size");
  }
}

void validate(const CostModel& cost) {
  if (cost.time_per_token_coeff <= 0.0) throw std::invalid_argument("CostModel: time_per_token_coeff must be positive");
  if (cost.backward_forward_ratio <= 0.0) throw std::invalid_argument("CostModel: backward_forward_ratio must be positive");
  if (cost.activation_bytes_coeff < 0.0) throw std::invalid_argument("CostModel: activation_bytes_coeff must be non-negative");
  if (cost.decode_step_base < 0.0) throw std::invalid_argument("CostModel: decode_step_base must be non-negative");
  if (cost.comm_bandwidth <= 0.0) throw std::invalid_argument("CostModel: comm_bandwidth must be positive");
}

void validate(const ClusterSpec& cluster) {
  if (cluster.num_gpus <= 0) throw std::invalid_argument("ClusterSpec: num_gpus must be positive");
  if (cluster.gpus_per_node <= 0) throw std::invalid_argument("ClusterSpec: gpus_per_node must be positive");
  if (cluster.bs_max <= 0) throw std::invalid_argument("ClusterSpec: bs_max must be positive");
  if (cluster.interconnect_bandwidth <= 0.0) {
    throw std::invalid_argument("ClusterSpec: interconnect_bandwidth must be positive");
  }
}

double per_layer_params(const ModelSpec& spec) {
  const double h = spec.hidden_size;
  const double i = spec.intermediate_size;
  return 4.0 * h * h + 2.0 * h * i;
}

double estimate_params(const ModelSpec& spec, int vocab_size) {
  return spec.num_layers * per_layer_params(spec) +
         2.0 * static_cast<double>(vocab_size) * spec.hidden_size;
}

double subtask_latency(const ModelSpec& spec, double layers_in_stage, int seq_len,
                       int mb_size, Direction dir, const CostModel& cost) {
  if (layers_in_stage <= 0.0) throw std::invalid_argument("subtask_latency: layers_in_stage must be positive");
  if (seq_len <= 0 || mb_size <= 0) throw std::invalid_argument("subtask_latency: seq_len and mb_size must be positive");
  // Embedding parameters are excluded: the embedding lookup is not repeated
  // per pipeline stage and contributes no meaningful FLOPs.
  double t = per_layer_params(spec) * layers_in_stage * seq_len * mb_size *
             cost.time_per_token_coeff;
  if (dir == Direction::kBackward) t *= cost.backward_forward_ratio;
  return t;
}

double activation_per_microbatch(const ModelSpec& spec, double layers_in_stage,
                                 int seq_len, int mb_size, const CostModel& cost) {
  if (layers_in_stage <= 0.0) throw std::invalid_argument("activation_per_microbatch: layers_in_stage must be positive");
  if (seq_len <= 0 || mb_size <= 0) throw std::invalid_argument("activation_per_microbatch: seq_len and mb_size must be positive");
  return cost.activation_bytes_coeff * spec.hidden_size * static_cast<double>(seq_len) *
         mb_size * layers_in_stage;
}

double kv_bytes_per_token(const ModelSpec& spec) {
  // K and V, 2 bytes each element.
  return 2.0 * 2.0 * spec.num_layers * static_cast<double>(spec.hidden_size);
}

double Rng::next_normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = next_double();
  while (u1 <= 0.0) u1 = next_double();
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

}  // namespace fuseplan
