// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "fuseplan/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "fuseplan/baseline.hpp"
#include "fuseplan/errors.hpp"
#include "fuseplan/fusion.hpp"

namespace fuseplan {

namespace {

void validate_task(const TaskSetup& task, const ClusterSpec& cluster) {
  validate(task.model);
  validate(task.strategy, cluster);
}

void validate_config(const IterationConfig& cfg) {
  validate(cfg.cluster);
  validate(cfg.cost);
  validate_task(cfg.actor, cfg.cluster);
  validate_task(cfg.ref, cfg.cluster);
  validate_task(cfg.critic, cfg.cluster);
  validate_task(cfg.reward, cfg.cluster);
  if (cfg.global_batch < 1 || cfg.mini_batch < 1 || cfg.global_batch % cfg.mini_batch != 0) {
    throw std::invalid_argument("IterationConfig: global_batch must be a multiple of mini_batch");
  }
  if (estimate_params(cfg.actor.model) != estimate_params(cfg.ref.model)) {
    throw std::invalid_argument("IterationConfig: actor and reference must be the same size");
  }
  if (estimate_params(cfg.critic.model) != estimate_params(cfg.reward.model)) {
    throw std::invalid_argument("IterationConfig: critic and reward must be the same size");
  }
  for (const TaskSetup* t : {&cfg.actor, &cfg.critic}) {
    if (t->strategy.gpus() != cfg.cluster.num_gpus) {
      throw std::invalid_argument("IterationConfig: training strategies must fill the cluster");
    }
    if (cfg.mini_batch % t->strategy.dp != 0) {
      throw std::invalid_argument("IterationConfig: mini_batch must divide across dp replicas");
    }
  }
  if (cfg.prompt_len < 0 || cfg.max_output_len < 1) {
    throw std::invalid_argument("IterationConfig: bad prompt or output length");
  }
  if (cfg.migrate_ratio < 0.0 || cfg.migrate_ratio > 1.0) {
    throw std::invalid_argument("IterationConfig: migrate_ratio must lie in [0, 1]");
  }
  if (cfg.num_chains < 1) throw std::invalid_argument("IterationConfig: need at least one chain");
}

std::vector<GenSample> generation_batch(const IterationConfig& cfg) {
  LengthDistribution dist = cfg.lengths;
  dist.max_len = std::min(dist.max_len, cfg.max_output_len);
  return make_batch(dist, cfg.global_batch, cfg.prompt_len, cfg.actor.model, cfg.seed);
}

GenSimConfig generation_config(const IterationConfig& cfg) {
  GenSimConfig gen;
  gen.actor = cfg.actor.model;
  gen.instance_gpus = cfg.actor.strategy.tp;
  gen.num_instances = cfg.cluster.num_gpus / gen.instance_gpus;
  gen.tasks = {{"ref", cfg.ref.model}, {"reward", cfg.reward.model}, {"critic", cfg.critic.model}};
  gen.cluster = cfg.cluster;
  gen.cost = cfg.cost;
  return gen;
}

int trained_seq_len(const IterationConfig& cfg, const std::vector<GenSample>& batch) {
  double sum = 0.0;
  for (const GenSample& s : batch) sum += s.target_output_len;
  return cfg.prompt_len + static_cast<int>(std::llround(sum / batch.size()));
}

double standalone_1f1b_seconds(const TaskSetup& task, int mini_batch, int seq_len,
                               const CostModel& cost) {
  const int pp = task.strategy.pp;
  const double layers = static_cast<double>(task.model.num_layers) / pp;
  const int m = mini_batch / task.strategy.dp;
  const std::vector<double> fwd(
      pp, subtask_latency(task.model, layers, seq_len, 1, Direction::kForward, cost) /
              task.strategy.tp);
  const std::vector<double> bwd(
      pp, subtask_latency(task.model, layers, seq_len, 1, Direction::kBackward, cost) /
              task.strategy.tp);
  return schedule_1f1b(pp, m, fwd, bwd).makespan();
}

double switch_transition_seconds(const IterationConfig& cfg) {
  if (cfg.switch_overhead >= 0.0) return cfg.switch_overhead;
  // Both trained models reshard between stage layouts; every GPU moves its
  // share in parallel, so the fleet-aggregate bandwidth applies.
  const double bytes =
      2.0 * (estimate_params(cfg.actor.model) + estimate_params(cfg.critic.model));
  const double aggregate = cfg.cost.comm_bandwidth * cfg.cluster.num_gpus;
  return bytes / aggregate + cfg.switch_setup_seconds;
}

}  // namespace

std::string IterationBreakdown::to_text() const {
  char buf[256];
  std::string out = "stage         seconds\n";
  std::snprintf(buf, sizeof(buf), "gen_plus_inf  %.9g\n", gen_plus_inf);
  out += buf;
  std::snprintf(buf, sizeof(buf), "train         %.9g\n", train);
  out += buf;
  std::snprintf(buf, sizeof(buf), "others        %.9g\n", others);
  out += buf;
  std::snprintf(buf, sizeof(buf), "total         %.9g\n", total());
  out += buf;
  return out;
}

IterationBreakdown simulate_iteration(const IterationConfig& cfg, IterationMode mode) {
  validate_config(cfg);
  const std::vector<GenSample> batch = generation_batch(cfg);
  const GenSimConfig gen = generation_config(cfg);
  if (cfg.cluster.num_gpus % gen.instance_gpus != 0) {
    throw std::invalid_argument("IterationConfig: actor tp must divide the GPU count");
  }

  IterationBreakdown out;
  if (mode == IterationMode::kBase) {
    out.gen_plus_inf = simulate_serial(batch, gen).total;
  } else {
    const int r_t = static_cast<int>(std::llround(cfg.migrate_ratio * cfg.global_batch));
    out.gen_plus_inf = simulate_fused(batch, gen, r_t).total;
  }

  const int seq = trained_seq_len(cfg, batch);
  const int minibatches = cfg.global_batch / cfg.mini_batch;
  if (mode == IterationMode::kBase) {
    const double per_mb = standalone_1f1b_seconds(cfg.actor, cfg.mini_batch, seq, cfg.cost) +
                          standalone_1f1b_seconds(cfg.critic, cfg.mini_batch, seq, cfg.cost);
    out.train = minibatches * per_mb;
  } else {
    // Latencies repeat each mini-batch, so one searched schedule is reused.
    const FusionLayout layout =
        transform_problem(cfg.actor.model, cfg.actor.strategy, cfg.critic.model,
                          cfg.critic.strategy, cfg.mini_batch, 1, seq, cfg.cluster, cfg.cost);
    AnnealParams params = cfg.anneal;
    params.seed = derive_seed(cfg.seed, 0x5eed);
    const SearchReport report = multi_seed_search(layout, params, cfg.num_chains);
    out.train = minibatches * report.best_energy;
  }

  // Two layout switches per iteration: training to generation and inference
  // back to training. Host-memory weight swaps of the scoring models overlap
  // with compute and contribute nothing.
  out.others = 2.0 * switch_transition_seconds(cfg);
  return out;
}

std::vector<std::vector<int>> balance_minibatch(const std::vector<int>& lengths, int dp) {
  if (dp < 1) throw std::invalid_argument("balance_minibatch: dp must be >= 1");
  if (static_cast<int>(lengths.size()) < dp) {
    throw std::invalid_argument("balance_minibatch: need at least dp samples");
  }
  std::vector<int> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (lengths[a] != lengths[b]) return lengths[a] > lengths[b];
    return a < b;
  });
  std::vector<std::vector<int>> groups(dp);
  std::vector<long long> load(dp, 0);
  for (const int idx : order) {
    int target = 0;
    for (int g = 1; g < dp; ++g) {
      if (load[g] < load[target]) target = g;
    }
    groups[target].push_back(idx);
    load[target] += lengths[idx];
  }
  return groups;
}

StrategyChoice search_strategy(const ModelSpec& spec, const ClusterSpec& cluster, TaskKind kind,
                               const StrategyWorkload& workload) {
  validate(spec);
  validate(cluster);
  if (workload.samples < 1 || workload.seq_len < 1 || workload.microbatch_size < 1 ||
      workload.gpu_memory_bytes <= 0.0) {
    throw std::invalid_argument("StrategyWorkload: positive sizes required");
  }

  // fp16 weights; training additionally holds gradients and fp32 optimizer
  // state (Adam moments plus a master copy).
  const double bytes_per_param = kind == TaskKind::kTrain ? 16.0 : 2.0;
  const double params = estimate_params(spec);

  bool found = false;
  StrategyChoice best;
  for (const int tp : {1, 2, 4, 8}) {
    if (tp > cluster.gpus_per_node || tp > cluster.num_gpus) continue;
    for (int pp = 1; pp <= spec.num_layers; ++pp) {
      if (spec.num_layers % pp != 0) continue;
      if (tp * pp > cluster.num_gpus || cluster.num_gpus % (tp * pp) != 0) continue;
      const int dp = cluster.num_gpus / (tp * pp);
      if (workload.samples % dp != 0) continue;
      const int m = workload.samples / dp / workload.microbatch_size;
      if (m < 1) continue;

      const double layers = static_cast<double>(spec.num_layers) / pp;
      const double weight_bytes = bytes_per_param * params / (pp * tp);
      const double act_one = activation_per_microbatch(spec, layers, workload.seq_len,
                                                       workload.microbatch_size, workload.cost) /
                             tp;
      const double act_bytes = kind == TaskKind::kTrain ? act_one * std::min(pp, m) : act_one;
      if (weight_bytes + act_bytes > workload.gpu_memory_bytes) continue;

      const CostModel& cost = workload.cost;
      const double fwd = subtask_latency(spec, layers, workload.seq_len,
                                         workload.microbatch_size, Direction::kForward, cost) /
                         tp;
      double candidate_cost;
      if (kind == TaskKind::kTrain) {
        const double bwd = subtask_latency(spec, layers, workload.seq_len,
                                           workload.microbatch_size, Direction::kBackward, cost) /
                           tp;
        candidate_cost = schedule_1f1b(pp, m, std::vector<double>(pp, fwd),
                                       std::vector<double>(pp, bwd))
                             .makespan();
      } else {
        candidate_cost = (m + pp - 1) * fwd;  // fill the pipe, then stream
      }

      const ParallelStrategy strat{dp, pp, tp};
      const bool better =
          !found || candidate_cost < best.cost ||
          (candidate_cost == best.cost &&
           (strat.pp < best.strategy.pp ||
            (strat.pp == best.strategy.pp && strat.tp < best.strategy.tp)));
      if (better) {
        best = {strat, candidate_cost};
        found = true;
      }
    }
  }
  if (!found) {
    throw InfeasibleError("search_strategy: no parallel strategy fits the memory model");
  }
  return best;
}

}  // namespace fuseplan
