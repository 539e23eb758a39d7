// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "fuseplan/fusion.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "fuseplan/baseline.hpp"
#include "fuseplan/errors.hpp"

namespace fuseplan {

void FusionLayout::build_tables() {
  if (num_stages <= 0 || n1 <= 0 || n2 <= 0 || m1 <= 0 || m2 <= 0) {
    throw std::invalid_argument("FusionLayout: geometry must be positive");
  }
  if (k1 * n1 != num_stages || k2 * n2 != num_stages) {
    throw std::invalid_argument("FusionLayout: k1*n1 and k2*n2 must both equal num_stages");
  }
  if (std::gcd(k1, k2) != 1) throw std::invalid_argument("FusionLayout: k1 and k2 must be coprime");
  if (k1 * m1 != k2 * m2) throw std::invalid_argument("FusionLayout: k1*m1 must equal k2*m2");
  for (int model = 0; model < 2; ++model) {
    const size_t depth = model == 0 ? n1 : n2;
    if (fwd_latency[model].size() != depth || bwd_latency[model].size() != depth ||
        activation[model].size() != depth) {
      throw std::invalid_argument("FusionLayout: latency/activation arrays must be sized per logical stage");
    }
    for (size_t l = 0; l < depth; ++l) {
      if (fwd_latency[model][l] <= 0.0 || bwd_latency[model][l] <= 0.0) {
        throw std::invalid_argument("FusionLayout: latencies must be positive");
      }
      if (activation[model][l] < 0.0) {
        throw std::invalid_argument("FusionLayout: activations must be non-negative");
      }
    }
  }

  const int w = row_width();
  const int total = total_subtasks();
  dep.assign(total, -1);
  latency.assign(total, 0.0);
  act_delta.assign(total, 0.0);
  for (int id = 0; id < total; ++id) {
    const int stage = id / w;
    const int local = id % w;
    const int model = model_of(id);
    const int logical = logical_at(stage, model);
    const bool bwd = (local & 1) != 0;
    const int depth = model == 0 ? n1 : n2;

    const double lat = bwd ? bwd_latency[model][logical] : fwd_latency[model][logical];
    latency[id] = lat;
    act_delta[id] = bwd ? -activation[model][logical] : activation[model][logical];

    // Forward chains ascend physical stages for model A and descend for
    // model B; backward chains run the other way. The deepest logical stage
    // turns around on its own stage.
    if (!bwd) {
      if (logical > 0) dep[id] = (model == 0 ? stage - 1 : stage + 1) * w + local;
    } else {
      if (logical == depth - 1) {
        dep[id] = id - 1;
      } else {
        dep[id] = (model == 0 ? stage + 1 : stage - 1) * w + local;
      }
    }
  }
}

FusionLayout transform_problem(const ModelSpec& spec_a, const ParallelStrategy& strat_a,
                               const ModelSpec& spec_b, const ParallelStrategy& strat_b,
                               int global_batch, int microbatch_size, int seq_len,
                               const ClusterSpec& cluster, const CostModel& cost) {
  validate(spec_a);
  validate(spec_b);
  validate(cluster);
  validate(cost);
  validate(strat_a, cluster);
  validate(strat_b, cluster);
  if (global_batch <= 0 || microbatch_size <= 0 || seq_len <= 0) {
    throw std::invalid_argument("transform_problem: batch, micro-batch and seq_len must be positive");
  }
  if (strat_a.gpus() != cluster.num_gpus || strat_b.gpus() != cluster.num_gpus) {
    throw std::invalid_argument("transform_problem: both strategies must fill the device pool");
  }

  FusionLayout layout;
  layout.stage_gpus = std::max(strat_a.tp, strat_b.tp);
  const int s1 = layout.stage_gpus / strat_a.tp;
  const int s2 = layout.stage_gpus / strat_b.tp;
  layout.s = std::max(s1, s2);
  if (strat_a.pp % s1 != 0 || strat_b.pp % s2 != 0) {
    throw InfeasibleError("transform_problem: pipeline stages not divisible by the tp ratio");
  }
  layout.n1 = strat_a.pp / s1;
  layout.n2 = strat_b.pp / s2;
  layout.num_stages = std::lcm(layout.n1, layout.n2);
  layout.k1 = layout.num_stages / layout.n1;
  layout.k2 = layout.num_stages / layout.n2;
  if (strat_a.dp % layout.k1 != 0 || strat_b.dp % layout.k2 != 0 ||
      strat_a.dp / layout.k1 != strat_b.dp / layout.k2) {
    throw InfeasibleError("transform_problem: data-parallel groups cannot tile fused blocks");
  }
  layout.num_blocks = strat_a.dp / layout.k1;

  if (global_batch % microbatch_size != 0) {
    throw InfeasibleError("transform_problem: global batch not divisible by micro-batch size");
  }
  const int total_mb = global_batch / microbatch_size;
  if (total_mb % strat_a.dp != 0 || total_mb % strat_b.dp != 0) {
    throw InfeasibleError("transform_problem: micro-batches not divisible across data-parallel groups");
  }
  layout.m1 = total_mb / strat_a.dp;
  layout.m2 = total_mb / strat_b.dp;

  layout.model_params = {estimate_params(spec_a), estimate_params(spec_b)};
  layout.model_names = {spec_a.name, spec_b.name};
  layout.activation_capacity = cluster.activation_capacity_per_stage;

  const ModelSpec* specs[2] = {&spec_a, &spec_b};
  const int depths[2] = {layout.n1, layout.n2};
  for (int model = 0; model < 2; ++model) {
    const double layers = static_cast<double>(specs[model]->num_layers) / depths[model];
    const double fwd = subtask_latency(*specs[model], layers, seq_len, microbatch_size,
                                       Direction::kForward, cost) /
                       layout.stage_gpus;
    const double bwd = subtask_latency(*specs[model], layers, seq_len, microbatch_size,
                                       Direction::kBackward, cost) /
                       layout.stage_gpus;
    const double act =
        activation_per_microbatch(*specs[model], layers, seq_len, microbatch_size, cost);
    layout.fwd_latency[model].assign(depths[model], fwd);
    layout.bwd_latency[model].assign(depths[model], bwd);
    layout.activation[model].assign(depths[model], act);
  }
  layout.build_tables();
  return layout;
}

ScheduleEvaluator::ScheduleEvaluator(const FusionLayout& layout) : layout_(&layout) {
  const int total = layout.total_subtasks();
  finish_.resize(total);
  pred_.resize(total);
  color_.resize(total);
  stack_.reserve(total);
}

bool ScheduleEvaluator::evaluate(const FusedSchedule& s) {
  const FusionLayout& layout = *layout_;
  const int total = layout.total_subtasks();
  const std::int32_t* dep = layout.dep.data();
  const double* lat = layout.latency.data();

  for (size_t i = 0; i < s.rows.size(); ++i) {
    std::int32_t prev = -1;
    for (const std::int32_t id : s.rows[i]) {
      pred_[id] = prev;
      prev = id;
    }
  }
  std::fill(color_.begin(), color_.end(), std::uint8_t{0});

  energy_ = 0.0;
  for (int root = 0; root < total; ++root) {
    if (color_[root] == 2) continue;
    color_[root] = 1;
    stack_.push_back(root);
    while (!stack_.empty()) {
      const std::int32_t id = stack_.back();
      const std::int32_t p = pred_[id];
      const std::int32_t d = dep[id];
      if (p >= 0 && color_[p] != 2) {
        if (color_[p] == 1) {
          stack_.clear();
          return false;
        }
        color_[p] = 1;
        stack_.push_back(p);
        continue;
      }
      if (d >= 0 && color_[d] != 2) {
        if (color_[d] == 1) {
          stack_.clear();
          return false;
        }
        color_[d] = 1;
        stack_.push_back(d);
        continue;
      }
      stack_.pop_back();
      color_[id] = 2;
      const double ready = std::max(p >= 0 ? finish_[p] : 0.0, d >= 0 ? finish_[d] : 0.0);
      const double f = ready + lat[id];
      finish_[id] = f;
      if (f > energy_) energy_ = f;
    }
  }
  return true;
}

namespace {

Verdict shape_check(const FusedSchedule& s, const FusionLayout& layout) {
  const int w = layout.row_width();
  if (static_cast<int>(s.rows.size()) != layout.num_stages) {
    return {ViolationKind::kMalformed, "wrong number of stage rows"};
  }
  std::vector<std::uint8_t> seen(w);
  for (int i = 0; i < layout.num_stages; ++i) {
    if (static_cast<int>(s.rows[i].size()) != w) {
      return {ViolationKind::kMalformed, "row " + std::to_string(i) + " has wrong length"};
    }
    std::fill(seen.begin(), seen.end(), std::uint8_t{0});
    for (const std::int32_t id : s.rows[i]) {
      const int local = id - i * w;
      if (local < 0 || local >= w || seen[local]) {
        return {ViolationKind::kMalformed,
                "row " + std::to_string(i) + " is not a permutation of its hosted subtasks"};
      }
      seen[local] = 1;
    }
  }
  return {};
}

Verdict turnaround_check(const FusedSchedule& s, const FusionLayout& layout) {
  // The only data dependency within a row is the deepest logical stage's
  // forward -> backward turnaround; it must be ordered forward first.
  const int w = layout.row_width();
  std::vector<std::int32_t> pos(w);
  for (int i = 0; i < layout.num_stages; ++i) {
    for (int p = 0; p < w; ++p) pos[s.rows[i][p] - i * w] = p;
    for (int model = 0; model < 2; ++model) {
      const int depth = model == 0 ? layout.n1 : layout.n2;
      if (layout.logical_at(i, model) != depth - 1) continue;
      const int base = model == 0 ? 0 : 2 * layout.m1;
      for (int mb = 0; mb < layout.microbatches(model); ++mb) {
        if (pos[base + 2 * mb] > pos[base + 2 * mb + 1]) {
          return {ViolationKind::kDataDependency,
                  "stage " + std::to_string(i) + ": backward of micro-batch " +
                      std::to_string(mb) + " precedes its forward"};
        }
      }
    }
  }
  return {};
}

}  // namespace

Verdict check_valid(const FusedSchedule& s, const FusionLayout& layout) {
  if (Verdict v = shape_check(s, layout); !v) return v;
  if (Verdict v = turnaround_check(s, layout); !v) return v;
  ScheduleEvaluator eval(layout);
  if (!eval.evaluate(s)) {
    return {ViolationKind::kDeadlock, "cross-stage ordering cycle"};
  }
  if (layout.activation_capacity > 0.0) {
    const std::vector<double> peaks = peak_memory(s, layout);
    for (int i = 0; i < layout.num_stages; ++i) {
      if (peaks[i] > layout.activation_capacity) {
        return {ViolationKind::kMemory,
                "stage " + std::to_string(i) + " peak activation exceeds capacity"};
      }
    }
  }
  return {};
}

double compute_energy(const FusedSchedule& s, const FusionLayout& layout) {
  if (Verdict v = shape_check(s, layout); !v) {
    throw std::invalid_argument("compute_energy: " + v.detail);
  }
  ScheduleEvaluator eval(layout);
  if (!eval.evaluate(s)) {
    throw std::invalid_argument("compute_energy: schedule has a dependency cycle");
  }
  return eval.energy();
}

std::vector<double> peak_memory(const FusedSchedule& s, const FusionLayout& layout) {
  std::vector<double> peaks(layout.num_stages, 0.0);
  for (int i = 0; i < layout.num_stages; ++i) {
    double run = 0.0, peak = 0.0;
    for (const std::int32_t id : s.rows[i]) {
      const double delta = layout.act_delta[id];
      run += delta;
      if (delta > 0.0 && run > peak) peak = run;
    }
    peaks[i] = peak;
  }
  return peaks;
}

double serial_1f1b_of_both(const FusionLayout& layout) {
  const double a =
      schedule_1f1b(layout.n1, layout.m1, layout.fwd_latency[0], layout.bwd_latency[0]).makespan();
  const double b =
      schedule_1f1b(layout.n2, layout.m2, layout.fwd_latency[1], layout.bwd_latency[1]).makespan();
  return a + b;
}

std::vector<double> serial_1f1b_peak_memory(const FusionLayout& layout) {
  std::vector<double> peaks(layout.num_stages, 0.0);
  for (int i = 0; i < layout.num_stages; ++i) {
    const int la = layout.logical_at(i, 0);
    const int lb = layout.logical_at(i, 1);
    const double a = std::min(layout.n1 - la, layout.m1) * layout.activation[0][la];
    const double b = std::min(layout.n2 - lb, layout.m2) * layout.activation[1][lb];
    peaks[i] = std::max(a, b);
  }
  return peaks;
}

}  // namespace fuseplan
