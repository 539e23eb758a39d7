// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance suite. Each criterion prints one [PASS]/[FAIL] line;
// the process exits non-zero if any criterion fails. Tolerances are pinned
// here, next to the checks that use them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fuseplan/annealer.hpp"
#include "fuseplan/baseline.hpp"
#include "fuseplan/core.hpp"
#include "fuseplan/fusion.hpp"
#include "fuseplan/genfuse.hpp"
#include "fuseplan/numerics.hpp"
#include "fuseplan/rng.hpp"
#include "fuseplan/run_config.hpp"
#include "fuseplan/schedule_io.hpp"

using namespace fuseplan;

namespace {

// Relative slack for comparing sums accumulated in different orders.
constexpr double kRelSlack = 1e-12;

struct Outcome {
  bool pass = false;
  std::string note;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared model zoo (LLaMA-style shapes).

ModelSpec spec_13b() { return {"13b", 40, 40, 5120, 13824}; }
ModelSpec spec_33b() { return {"33b", 60, 52, 6656, 17920}; }
ModelSpec spec_65b() { return {"65b", 80, 64, 8192, 22016}; }
ModelSpec spec_7b() { return {"7b", 32, 32, 4096, 11008}; }
ModelSpec spec_scorer(const std::string& name) { return {name, 16, 16, 2048, 8192}; }

// ---------------------------------------------------------------------------
// Random fused layouts. Geometries are (n1, n2, k1, k2) with num_stages =
// lcm(n1, n2) <= 6; micro-batch counts satisfy m1*k1 == m2*k2.

FusionLayout random_small_layout(Rng& rng, int max_subtasks) {
  static const int geometries[][4] = {
      {1, 1, 1, 1}, {2, 1, 1, 2}, {1, 2, 2, 1}, {2, 2, 1, 1}, {3, 1, 1, 3},
      {1, 3, 3, 1}, {3, 3, 1, 1}, {4, 2, 1, 2}, {2, 4, 2, 1}, {4, 4, 1, 1},
      {6, 2, 1, 3}, {2, 6, 3, 1}, {6, 3, 1, 2}, {3, 6, 2, 1}, {5, 5, 1, 1},
      {6, 6, 1, 1}, {5, 1, 1, 5}, {6, 1, 1, 6},
  };
  for (;;) {
    const auto& g = geometries[rng.next_below(18)];
    const int j = 1 + static_cast<int>(rng.next_below(4));
    FusionLayout l;
    l.n1 = g[0];
    l.n2 = g[1];
    l.k1 = g[2];
    l.k2 = g[3];
    l.num_stages = l.k1 * l.n1;
    l.m1 = l.k2 * j;
    l.m2 = l.k1 * j;
    if (l.m1 + l.m2 > 8) continue;
    if (l.num_stages * 2 * (l.m1 + l.m2) > max_subtasks) continue;
    l.model_params = {2.0, 1.0};
    l.model_names = {"a", "b"};
    for (int model = 0; model < 2; ++model) {
      const int depth = model == 0 ? l.n1 : l.n2;
      for (int d = 0; d < depth; ++d) {
        l.fwd_latency[model].push_back(0.5 + 2.0 * rng.next_double());
        l.bwd_latency[model].push_back(0.5 + 2.0 * rng.next_double());
        l.activation[model].push_back(0.5 + rng.next_double());
      }
    }
    l.build_tables();
    return l;
  }
}

// Tiny-instance corpus for the oracle comparison: at most 16 subtasks.
FusionLayout random_tiny_layout(Rng& rng) {
  static const int geometries[][6] = {{1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 2, 2},
                                      {2, 2, 1, 1, 1, 1}, {2, 1, 1, 2, 2, 1},
                                      {3, 3, 1, 1, 1, 1}, {4, 2, 1, 2, 2, 1},
                                      {3, 1, 1, 3, 3, 1}, {4, 4, 1, 1, 1, 1}};
  for (;;) {
    const auto& g = geometries[rng.next_below(8)];
    FusionLayout l;
    l.num_stages = g[2] * g[0];
    l.n1 = g[0];
    l.n2 = g[1];
    l.k1 = g[2];
    l.k2 = g[3];
    l.m1 = g[4];
    l.m2 = g[5];
    if (l.num_stages * 2 * (l.m1 + l.m2) > 16) continue;
    l.model_params = {2.0, 1.0};
    l.model_names = {"a", "b"};
    for (int model = 0; model < 2; ++model) {
      const int depth = model == 0 ? l.n1 : l.n2;
      for (int d = 0; d < depth; ++d) {
        l.fwd_latency[model].push_back(0.5 + 2.0 * rng.next_double());
        l.bwd_latency[model].push_back(0.5 + 2.0 * rng.next_double());
        l.activation[model].push_back(1.0);
      }
    }
    l.build_tables();
    return l;
  }
}

double scalar_peak(const FusedSchedule& s, const FusionLayout& l) {
  const std::vector<double> peaks = peak_memory(s, l);
  return peaks.empty() ? 0.0 : *std::max_element(peaks.begin(), peaks.end());
}

// ---------------------------------------------------------------------------
// Criterion 1: closed-form bubble fractions.

Outcome criterion1() {
  int checked = 0;
  for (int n = 1; n <= 16; ++n) {
    for (int m = 1; m <= 16; ++m) {
      for (int k = 1; k <= 16; ++k) {
        if (k * m > 64) continue;
        if (k > 1 && m % n != 0) continue;  // interleaved needs M % N == 0
        const std::vector<double> fwd(static_cast<size_t>(n), 1.0 * k);
        const std::vector<double> bwd(static_cast<size_t>(n), 2.0 * k);
        const PipelineTaskTrace trace =
            k == 1 ? schedule_1f1b(n, m, fwd, bwd)
                   : schedule_interleaved(n, m, k, fwd, bwd);
        const Rational measured = trace.measured_bubble();
        const Rational want = bubble_fraction(n, m, k);
        if (measured.num != want.num || measured.den != want.den) {
          return {false, fmt("mismatch at N=%d M=%d K=%d: %lld/%lld vs %lld/%lld", n, m,
                             k, static_cast<long long>(measured.num),
                             static_cast<long long>(measured.den),
                             static_cast<long long>(want.num),
                             static_cast<long long>(want.den))};
        }
        ++checked;
      }
    }
  }
  return {true, fmt("%d (N,M,K) settings exact", checked)};
}

// ---------------------------------------------------------------------------
// Criterion 2: compute_energy against an independent event-driven executor.

// Fixed-point replay: repeatedly start the first unstarted subtask of any
// stage whose data dependency has finished. Intentionally re-implements the
// semantics instead of reusing ScheduleEvaluator.
double executor_energy(const FusedSchedule& s, const FusionLayout& layout) {
  const int total = layout.total_subtasks();
  std::vector<double> finish(static_cast<size_t>(total), -1.0);
  std::vector<size_t> cursor(s.rows.size(), 0);
  std::vector<double> idle_at(s.rows.size(), 0.0);
  int remaining = total;
  while (remaining > 0) {
    bool progressed = false;
    for (size_t stage = 0; stage < s.rows.size(); ++stage) {
      while (cursor[stage] < s.rows[stage].size()) {
        const std::int32_t id = s.rows[stage][cursor[stage]];
        const std::int32_t dep = layout.dep[static_cast<size_t>(id)];
        if (dep >= 0 && finish[static_cast<size_t>(dep)] < 0.0) break;
        const double ready = dep >= 0 ? finish[static_cast<size_t>(dep)] : 0.0;
        finish[static_cast<size_t>(id)] =
            std::max(idle_at[stage], ready) + layout.latency[static_cast<size_t>(id)];
        idle_at[stage] = finish[static_cast<size_t>(id)];
        ++cursor[stage];
        --remaining;
        progressed = true;
      }
    }
    if (!progressed) return -1.0;  // deadlock; checked schedules never reach this
  }
  return *std::max_element(finish.begin(), finish.end());
}

Outcome criterion2() {
  Rng rng(0xacc2);
  int checked = 0;
  for (int layout_idx = 0; layout_idx < 200; ++layout_idx) {
    const FusionLayout l = random_small_layout(rng, 6 * 2 * 8);
    FusedSchedule s = greedy_schedule(l);
    for (int variant = 0; variant < 5; ++variant) {
      const double want = executor_energy(s, l);
      const double got = compute_energy(s, l);
      if (got != want) {
        return {false, fmt("layout %d variant %d: energy %.17g vs executor %.17g",
                           layout_idx, variant, got, want)};
      }
      ++checked;
      for (int step = 0; step < 6; ++step) s = compute_neighbor(s, l, rng);
    }
  }
  return {true, fmt("%d schedules, exact equality", checked)};
}

// ---------------------------------------------------------------------------
// Criterion 3: LB <= oracle <= anneal <= greedy <= serial; anneal hits the
// oracle on >= 96% of 200 tiny instances.

Outcome criterion3() {
  Rng corpus(424242);
  int matches = 0;
  for (int i = 0; i < 200; ++i) {
    const FusionLayout l = random_tiny_layout(corpus);
    const double lb = lower_bound(l);
    const OracleResult oracle = exhaustive_oracle(l);
    AnnealParams params;
    params.seed = derive_seed(424242, static_cast<std::uint64_t>(5000 + i));
    const SearchReport rep = multi_seed_search(l, params, 4);
    const double slack = kRelSlack * rep.serial_energy;
    if (lb > oracle.energy + slack) {
      return {false, fmt("instance %d: LB %.17g above oracle %.17g", i, lb, oracle.energy)};
    }
    if (oracle.energy > rep.best_energy + slack) {
      return {false, fmt("instance %d: oracle %.17g above anneal %.17g", i, oracle.energy,
                         rep.best_energy)};
    }
    if (rep.best_energy > rep.greedy_energy + slack) {
      return {false, fmt("instance %d: anneal above greedy", i)};
    }
    if (rep.greedy_energy > rep.serial_energy + slack) {
      return {false, fmt("instance %d: greedy above serial", i)};
    }
    if (std::abs(rep.best_energy - oracle.energy) <= slack) ++matches;
  }
  if (matches < 192) {
    return {false, fmt("anneal matched the oracle on only %d/200 (< 192)", matches)};
  }
  return {true, fmt("orderings hold on 200/200; anneal matched oracle on %d/200", matches)};
}

// ---------------------------------------------------------------------------
// Criterion 4: the 12-setting schedule-quality grid.

struct GridSetting {
  ModelSpec a, b;
  int pp1, pp2, mult;
};

Outcome criterion4() {
  std::vector<GridSetting> grid;
  for (int mult : {1, 2, 4}) {
    grid.push_back({spec_33b(), spec_13b(), 8, 4, mult});
    grid.push_back({spec_33b(), spec_13b(), 8, 8, mult});
    grid.push_back({spec_65b(), spec_33b(), 16, 8, mult});
    grid.push_back({spec_65b(), spec_33b(), 16, 16, mult});
  }
  int gap_ok = 0;
  int speedup_ok = 0;
  std::string worst;
  double worst_gap = -1.0;
  for (size_t i = 0; i < grid.size(); ++i) {
    const GridSetting& g = grid[i];
    const int k2 = g.pp1 / g.pp2;
    ParallelStrategy strat_a{1, g.pp1, 8};
    ParallelStrategy strat_b{k2, g.pp2, 8};
    ClusterSpec cluster;
    cluster.num_gpus = strat_a.gpus();
    const int gbs = g.mult * g.pp1;  // m1 in {PP, 2PP, 4PP}
    const FusionLayout layout = transform_problem(g.a, strat_a, g.b, strat_b, gbs, 1,
                                                  2048, cluster, CostModel{});
    AnnealParams params;
    params.seed = derive_seed(777, i);
    const SearchReport rep = multi_seed_search(layout, params, 128);
    const double gap = (rep.best_energy - rep.lb) / rep.lb;
    if (gap <= 0.01) ++gap_ok;
    if (rep.best_energy <= rep.greedy_energy * (1.0 + kRelSlack)) ++speedup_ok;
    if (gap > worst_gap) {
      worst_gap = gap;
      worst = fmt("%s/%s pp%d/%d M=%d gap %.3f%%", g.a.name.c_str(), g.b.name.c_str(),
                  g.pp1, g.pp2, gbs, 100.0 * gap);
    }
  }
  const bool pass = gap_ok >= 11 && speedup_ok == 12;
  return {pass, fmt("gap<=1%% in %d/12, annealed>=greedy in %d/12; worst: %s", gap_ok,
                    speedup_ok, worst.c_str())};
}

// ---------------------------------------------------------------------------
// Criterion 5: 65B + 33B case study against the standalone-65B 1F1B run.

Outcome criterion5() {
  ParallelStrategy strat_a{1, 16, 8};
  ParallelStrategy strat_b{2, 8, 8};
  ClusterSpec cluster;
  cluster.num_gpus = 128;
  const FusionLayout layout =
      transform_problem(spec_65b(), strat_a, spec_33b(), strat_b, 16, 1, 2048, cluster,
                        CostModel{});
  AnnealParams params;
  params.seed = derive_seed(2026, 0);
  const SearchReport rep = multi_seed_search(layout, params, 128);
  const AnnealResult mem = optimize_memory(rep.best, layout, params);

  const PipelineTaskTrace standalone =
      schedule_1f1b(layout.n1, layout.m1, layout.fwd_latency[0], layout.bwd_latency[0]);
  const double fused_makespan = compute_energy(mem.schedule, layout);
  const double makespan_ratio = fused_makespan / standalone.makespan();

  const std::vector<double> serial_peaks = serial_1f1b_peak_memory(layout);
  const double serial_peak = *std::max_element(serial_peaks.begin(), serial_peaks.end());
  const double fused_peak = scalar_peak(mem.schedule, layout);
  const double peak_ratio = fused_peak / serial_peak;

  const bool pass = makespan_ratio <= 1.02 && peak_ratio <= 1.02;
  return {pass, fmt("fused/standalone-65B makespan %.4f (<=1.02), peak/serial %.4f (<=1.02)",
                    makespan_ratio, peak_ratio)};
}

// ---------------------------------------------------------------------------
// Criterion 6: the memory pass and the greedy-vs-annealed peak direction.

Outcome criterion6() {
  Rng rng(0xacc6);
  int direction = 0;
  for (int i = 0; i < 100; ++i) {
    const FusionLayout l = random_small_layout(rng, 48);
    AnnealParams params;
    params.seed = derive_seed(606, static_cast<std::uint64_t>(i));
    const FusedSchedule greedy = greedy_schedule(l);
    const AnnealResult annealed = anneal(greedy, l, params);
    const AnnealResult packed = optimize_memory(annealed.schedule, l, params);

    const double makespan_before = compute_energy(annealed.schedule, l);
    const double makespan_after = compute_energy(packed.schedule, l);
    if (makespan_after > makespan_before * (1.0 + kRelSlack)) {
      return {false, fmt("instance %d: memory pass raised makespan %.17g -> %.17g", i,
                         makespan_before, makespan_after)};
    }
    const double peak_before = scalar_peak(annealed.schedule, l);
    const double peak_after = scalar_peak(packed.schedule, l);
    if (peak_after > peak_before) {
      return {false, fmt("instance %d: memory pass raised peak %.17g -> %.17g", i,
                         peak_before, peak_after)};
    }
    if (scalar_peak(greedy, l) >= peak_after) ++direction;
  }
  if (direction < 90) {
    return {false, fmt("greedy peak >= annealed peak on only %d/100 (< 90)", direction)};
  }
  return {true, fmt("makespan/peak invariants on 100/100; greedy >= annealed peak on %d/100",
                    direction)};
}

// ---------------------------------------------------------------------------
// Criteria 7 and 8 share the pinned generation setup.

GenSimConfig sweep_setup() {
  GenSimConfig cfg;
  cfg.actor = spec_7b();
  cfg.num_instances = 8;
  cfg.instance_gpus = 8;
  cfg.tasks = {{"reward", spec_scorer("reward")}, {"critic", spec_scorer("critic")}};
  cfg.cluster.num_gpus = 64;
  cfg.cluster.bs_max = 256;
  cfg.cluster.kv_capacity_per_instance = 24e9;
  cfg.cluster.interconnect_bandwidth = 1e11;
  return cfg;
}

std::vector<GenSample> sweep_batch(const GenSimConfig& cfg) {
  LengthDistribution dist;
  dist.median = 200.0;
  dist.p999_ratio = 10.0;
  dist.max_len = 1024;
  return make_batch(dist, 512, 256, cfg.actor, 424242);
}

Outcome criterion7() {
  const GenSimConfig cfg = sweep_setup();
  const std::vector<GenSample> batch = sweep_batch(cfg);
  const SweepResult res = sweep_threshold(batch, cfg);  // 5%..95% grid
  const SweepPoint& best = res.curve[static_cast<size_t>(res.best_index)];

  const bool interior = res.best_index > 0 &&
                        res.best_index + 1 < static_cast<int>(res.curve.size()) &&
                        best.fused_total < res.curve.front().fused_total &&
                        best.fused_total < res.curve.back().fused_total;
  const bool argmin_band = best.ratio >= 0.10 && best.ratio <= 0.35;
  const bool speedup = best.fused_total <= res.serial_total / 1.1;
  const bool pass = interior && argmin_band && speedup;
  return {pass, fmt("argmin ratio %.2f (in [0.10,0.35]: %s), fused %.3f vs serial/1.1 "
                    "%.3f, interior: %s",
                    best.ratio, argmin_band ? "yes" : "no", best.fused_total,
                    res.serial_total / 1.1, interior ? "yes" : "no")};
}

Outcome criterion8() {
  const GenSimConfig cfg = sweep_setup();
  const std::vector<GenSample> batch = sweep_batch(cfg);
  const GenStageResult serial = simulate_serial(batch, cfg);
  int checked = 0;
  for (int pct = 5; pct <= 95; pct += 5) {
    const int r_t = static_cast<int>(std::llround(pct / 100.0 * batch.size()));
    const GenStageResult fused = simulate_fused(batch, cfg, r_t);
    const double slack = 1e-9 * serial.gen_end;
    for (size_t s = 0; s < batch.size(); ++s) {
      const double bound = serial.finish_time[s] + fused.plan.overhead + slack;
      if (fused.finish_time[s] > bound) {
        return {false,
                fmt("r_t=%d sample %zu: fused finish %.9f > serial %.9f + overhead %.9f",
                    r_t, s, fused.finish_time[s], serial.finish_time[s],
                    fused.plan.overhead)};
      }
      ++checked;
    }
  }
  return {true, fmt("%d (r_t, sample) pairs within serial + overhead", checked)};
}

// ---------------------------------------------------------------------------
// Criterion 9: GAE matrix form vs recursion.

Outcome criterion9() {
  GaeInputs fixture;
  fixture.rewards = {1.0, 1.0};
  fixture.values = {0.0, 0.0, 0.0};
  fixture.gamma = 0.9;
  fixture.lam = 0.95;
  const std::vector<double> fixed = gae_recursive(fixture);
  if (std::abs(fixed[0] - 1.855) > 1e-12 || std::abs(fixed[1] - 1.0) > 1e-12) {
    return {false, fmt("hand example gave [%.12f, %.12f], want [1.855, 1.0]", fixed[0],
                       fixed[1])};
  }

  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len_dist(1, 4096);
  std::uniform_real_distribution<double> val_dist(-10.0, 10.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    GaeInputs in;
    in.rewards.resize(static_cast<size_t>(len_dist(rng)));
    in.values.resize(in.rewards.size() + 1);
    for (double& r : in.rewards) r = val_dist(rng);
    for (double& v : in.values) v = val_dist(rng);
    in.gamma = unit(rng);
    in.lam = unit(rng);
    const std::vector<double> a = gae_recursive(in);
    const std::vector<double> b = gae_matrix(in);
    double scale = 1.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    for (double v : b) scale = std::max(scale, std::abs(v));
    for (size_t t = 0; t < a.size(); ++t) {
      worst = std::max(worst, std::abs(a[t] - b[t]) / scale);
    }
  }
  if (worst > 1e-10) {
    return {false, fmt("max relative difference %.3e exceeds 1e-10", worst)};
  }
  return {true, fmt("hand example exact; 1000 instances within %.3e", worst)};
}

// ---------------------------------------------------------------------------
// Criterion 10: CLI determinism and chain-count monotonicity.

#ifndef FUSEPLAN_CLI_BIN
#define FUSEPLAN_CLI_BIN "fuseplan"
#endif
#ifndef FUSEPLAN_CONFIG_DIR
#define FUSEPLAN_CONFIG_DIR "configs"
#endif

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FUSEPLAN_CLI_BIN) + " " + args + " > /dev/null";
  return std::system(cmd.c_str());
}

double stats_energy(const std::string& dir) {
  const std::string text = read_file(dir + "/stats.txt");
  const size_t at = text.find("best_energy: ");
  if (at == std::string::npos) throw std::runtime_error("stats.txt lacks best_energy");
  return std::strtod(text.c_str() + at + 13, nullptr);
}

Outcome criterion10() {
  const std::string config = std::string(FUSEPLAN_CONFIG_DIR) + "/demo_small.cfg";
  const std::string base = "acceptance_c10";
  for (const char* sub : {"a", "b", "c32", "c64"}) {
    std::filesystem::create_directories(base + "/" + sub);
  }
  const std::string common = "schedule --config " + config + " --seed 123 --out " + base;
  if (run_cli(common + "/a --chains 32") != 0 || run_cli(common + "/b --chains 32") != 0 ||
      run_cli(common + "/c32 --chains 32") != 0 || run_cli(common + "/c64 --chains 64") != 0) {
    return {false, "CLI invocation failed"};
  }
  for (const char* file : {"/schedule.txt", "/schedule.svg", "/stats.txt"}) {
    if (read_file(base + "/a" + file) != read_file(base + "/b" + file)) {
      return {false, fmt("reruns differ in %s", file)};
    }
  }
  const double e32 = stats_energy(base + "/c32");
  const double e64 = stats_energy(base + "/c64");
  if (e64 > e32) {
    return {false, fmt("64 chains worsened energy: %.17g > %.17g", e64, e32)};
  }
  return {true, fmt("reruns byte-identical; energy 32->64 chains %.6g -> %.6g", e32, e64)};
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* title;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "bubble fractions match the closed forms exactly", criterion1},
      {2, "compute_energy equals an independent executor", criterion2},
      {3, "LB <= oracle <= anneal <= greedy <= serial on tiny instances", criterion3},
      {4, "multi-seed search closes the LB gap on the 12-setting grid", criterion4},
      {5, "65B+33B case study: makespan and memory within 2%", criterion5},
      {6, "memory pass invariants and peak direction", criterion6},
      {7, "migration-threshold sweep has the documented optimum", criterion7},
      {8, "generation finish times preserved up to migration overhead", criterion8},
      {9, "GAE matrix form matches the recursion", criterion9},
      {10, "CLI schedule runs are deterministic and chain-monotone", criterion10},
  };
  bool all = true;
  for (const Entry& e : entries) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = e.fn();
    } catch (const std::exception& ex) {
      o = {false, fmt("exception: %s", ex.what())};
    }
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %2d: %s — %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", e.id,
                e.title, o.note.c_str(), dt);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
