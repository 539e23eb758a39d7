// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "fuseplan/annealer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <queue>
#include <stdexcept>
#include <utility>

#include "fuseplan/errors.hpp"

namespace fuseplan {

namespace {

void require_tables(const FusionLayout& layout) {
  if (layout.dep.empty() || static_cast<int>(layout.dep.size()) != layout.total_subtasks()) {
    throw std::invalid_argument("layout tables not built");
  }
}

double row_peak(const std::vector<std::int32_t>& row, const FusionLayout& layout) {
  double run = 0.0, peak = 0.0;
  for (const std::int32_t id : row) {
    const double delta = layout.act_delta[id];
    run += delta;
    if (delta > 0.0 && run > peak) peak = run;
  }
  return peak;
}

double max_peak(const FusedSchedule& s, const FusionLayout& layout) {
  double out = 0.0;
  for (const auto& row : s.rows) out = std::max(out, row_peak(row, layout));
  return out;
}

struct SwapAttempt {
  int stage = -1;
  int pos = -1;
};

void undo_swap(FusedSchedule& s, const SwapAttempt& mv) {
  std::swap(s.rows[mv.stage][mv.pos], s.rows[mv.stage][mv.pos + 1]);
}

// Draws adjacent transpositions until one yields a valid schedule, leaving
// `s` mutated to that neighbor and returning its energy. `admissible` may
// veto an otherwise valid neighbor (still consuming a retry). Returns NaN
// once retry_limit consecutive draws failed; `s` is then unchanged.
template <typename Admissible>
double random_valid_swap(FusedSchedule& s, const FusionLayout& layout, ScheduleEvaluator& eval,
                         Rng& rng, int retry_limit, SwapAttempt& applied,
                         const Admissible& admissible) {
  const int n = layout.num_stages;
  const int w = layout.row_width();
  const double cap = layout.activation_capacity;
  for (int attempt = 0; attempt < retry_limit; ++attempt) {
    const SwapAttempt mv{static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n))),
                         static_cast<int>(rng.next_below(static_cast<std::uint64_t>(w - 1)))};
    auto& row = s.rows[mv.stage];
    const std::int32_t a = row[mv.pos];
    const std::int32_t b = row[mv.pos + 1];
    if (layout.dep[b] == a) continue;  // b consumes a's output; swapping is a 2-cycle
    std::swap(row[mv.pos], row[mv.pos + 1]);
    const bool fits = cap <= 0.0 || row_peak(row, layout) <= cap;
    if (fits && eval.evaluate(s) && admissible(eval.energy())) {
      applied = mv;
      return eval.energy();
    }
    undo_swap(s, mv);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// Standalone trace of one model's subtasks under the classic 1F1B cadence:
// a stage at logical offset l of a depth-d block keeps at most min(d - l, m)
// forward micro-batches in flight and runs backwards first. The other model
// is absent, so the trace reproduces the model's solo pipeline timetable.
// late_start holds the latest start of each subtask that still preserves the
// solo makespan with the per-stage order fixed; the difference to start is
// the float a fused schedule may hand to the other model.
struct AlonePlan {
  std::vector<double> start;                     // by id; -1 for absent ids
  std::vector<double> late_start;                // by id; latest lossless start
  std::vector<std::vector<std::int32_t>> order;  // per stage, in start order
  double makespan = 0.0;
  bool ok = false;
};

// `entry_cycle`, when positive, rate-limits the chain-root forwards (one new
// microbatch per cycle): feeding the pipeline faster than its bottleneck
// stage can drain it only piles up activations, so the spread trace keeps the
// solo makespan whenever the stage latencies are balanced, while its in-flight
// profile ramps one microbatch per cycle instead of front-loading the warmup.
AlonePlan solo_1f1b(const FusionLayout& layout, int model, double entry_cycle = 0.0) {
  const int n = layout.num_stages;
  const int w = layout.row_width();
  const int depth = model == 0 ? layout.n1 : layout.n2;
  const int mbs = layout.microbatches(model);
  const double cap = layout.activation_capacity;

  AlonePlan plan;
  plan.start.assign(static_cast<std::size_t>(n) * w, -1.0);
  plan.order.assign(n, {});

  std::vector<std::vector<std::int32_t>> pending(n);
  int remaining = 0;
  for (int i = 0; i < n; ++i) {
    for (int local = 0; local < w; ++local) {
      const std::int32_t id = i * w + local;
      if (layout.model_of(id) == model) {
        pending[i].push_back(id);
        ++remaining;
      }
    }
  }

  std::vector<double> finish(static_cast<std::size_t>(n) * w, -1.0);
  std::vector<double> run(n, 0.0);
  std::vector<double> busy_until(n, 0.0);
  std::vector<int> holding(n, 0);
  std::priority_queue<double, std::vector<double>, std::greater<>> events;
  if (entry_cycle > 0.0) {
    for (int j = 1; j < mbs; ++j) events.push(entry_cycle * j);
  }

  const auto better = [&](std::int32_t x, std::int32_t y) {
    if (layout.dir_of(x) != layout.dir_of(y)) return layout.dir_of(x) == Direction::kBackward;
    const int mx = layout.microbatch_of(x), my = layout.microbatch_of(y);
    if (mx != my) return mx < my;
    return x < y;
  };

  double now = 0.0;
  while (remaining > 0) {
    for (int i = 0; i < n; ++i) {
      if (busy_until[i] > now) continue;
      const int warm = std::min(depth - layout.logical_at(i, model), mbs);
      int best_slot = -1;
      for (int slot = 0; slot < static_cast<int>(pending[i].size()); ++slot) {
        const std::int32_t id = pending[i][slot];
        const std::int32_t d = layout.dep[id];
        if (d >= 0 && !(finish[d] >= 0.0 && finish[d] <= now)) continue;
        if (entry_cycle > 0.0 && d < 0 && layout.dir_of(id) == Direction::kForward &&
            now < entry_cycle * layout.microbatch_of(id)) {
          continue;
        }
        if (layout.dir_of(id) == Direction::kForward && holding[i] >= warm) continue;
        const double delta = layout.act_delta[id];
        if (cap > 0.0 && delta > 0.0 && run[i] + delta > cap) continue;
        if (best_slot < 0 || better(id, pending[i][best_slot])) best_slot = slot;
      }
      if (best_slot < 0) continue;
      const std::int32_t id = pending[i][best_slot];
      pending[i][best_slot] = pending[i].back();
      pending[i].pop_back();
      plan.start[id] = now;
      plan.order[i].push_back(id);
      finish[id] = now + layout.latency[id];
      busy_until[i] = finish[id];
      run[i] += layout.act_delta[id];
      holding[i] += layout.dir_of(id) == Direction::kForward ? 1 : -1;
      events.push(finish[id]);
      --remaining;
    }
    if (remaining == 0) break;
    if (events.empty()) return plan;  // wedged under the activation cap
    now = events.top();
    while (!events.empty() && events.top() <= now) events.pop();
  }

  for (const auto& row : plan.order) {
    for (const std::int32_t id : row) plan.makespan = std::max(plan.makespan, finish[id]);
  }
  plan.late_start.assign(plan.start.size(), -1.0);
  std::vector<std::vector<std::int32_t>> children(plan.start.size());
  std::vector<std::int32_t> ids;
  ids.reserve(plan.start.size());
  for (const auto& row : plan.order) {
    for (std::size_t p = 0; p < row.size(); ++p) {
      ids.push_back(row[p]);
      const std::int32_t d = layout.dep[row[p]];
      if (d >= 0) children[d].push_back(row[p]);
    }
  }
  // Backward pass in descending start order; children and stage successors
  // always start strictly later than their producers, so one pass suffices.
  std::sort(ids.begin(), ids.end(),
            [&](std::int32_t a, std::int32_t b) { return plan.start[a] > plan.start[b]; });
  std::vector<std::int32_t> succ(plan.start.size(), -1);
  for (const auto& row : plan.order) {
    for (std::size_t p = 0; p + 1 < row.size(); ++p) succ[row[p]] = row[p + 1];
  }
  for (const std::int32_t id : ids) {
    double late_end = plan.makespan;
    if (succ[id] >= 0) late_end = std::min(late_end, plan.late_start[succ[id]]);
    for (const std::int32_t c : children[id]) late_end = std::min(late_end, plan.late_start[c]);
    plan.late_start[id] = late_end - layout.latency[id];
  }
  plan.ok = true;
  return plan;
}

// Bottleneck cycle of one model: the slowest stage's forward+backward pair.
// A pipeline cannot retire microbatches faster than this.
double bottleneck_cycle(const FusionLayout& layout, int model) {
  const int depth = model == 0 ? layout.n1 : layout.n2;
  double cycle = 0.0;
  for (int l = 0; l < depth; ++l) {
    cycle = std::max(cycle, layout.fwd_latency[model][l] + layout.bwd_latency[model][l]);
  }
  return cycle;
}

// Fused construction used to diversify chain starts: `paced`'s subtasks keep
// their solo 1F1B order and never start after their solo late starts, so the
// paced model finishes within its solo makespan; the other model's subtasks
// fill the gaps, allowed to displace paced work only into its float. With
// `run_late` the paced subtasks are held back to their late starts, trading
// pipeline eagerness for a flatter activation profile; `spread` rate-limits
// the paced model's warmup to its bottleneck cycle first, flattening the
// profile further. `noise`, when set, replaces the filler priority with
// per-id keys. Returns empty rows when the build wedges (possible only under
// a tight activation cap); callers fall back to the greedy trace.
FusedSchedule woven_schedule(const FusionLayout& layout, int paced, bool run_late,
                             const std::vector<double>* noise, int spread_mask = 0) {
  const AlonePlan plan =
      solo_1f1b(layout, paced, (spread_mask & 1) ? bottleneck_cycle(layout, paced) : 0.0);
  if (!plan.ok) return {};

  const int n = layout.num_stages;
  const int w = layout.row_width();
  const int other = 1 - paced;
  const double cap = layout.activation_capacity;
  // In spread mode the paced model's source forwards are admitted at its
  // bottleneck cadence: entries arrive no faster than the pipeline can drain
  // them, so per-stage holding ramps one activation per cycle instead of
  // flooding during warmup. Everything downstream runs eagerly.
  const double entry_cycle = (spread_mask & 1) ? bottleneck_cycle(layout, paced) : 0.0;
  // Optionally the filler is fed at its own bottleneck cadence as well;
  // flooding it in faster only builds up in-transit activations that stall
  // against the cap at downstream stages.
  const double other_cycle = (spread_mask & 2) ? bottleneck_cycle(layout, other) : 0.0;

  FusedSchedule s;
  s.rows.assign(n, {});
  std::vector<std::vector<std::int32_t>> pending(n);
  for (int i = 0; i < n; ++i) {
    s.rows[i].reserve(w);
    for (int local = 0; local < w; ++local) {
      const std::int32_t id = i * w + local;
      if (layout.model_of(id) == other) pending[i].push_back(id);
    }
  }

  std::vector<double> finish(static_cast<std::size_t>(n) * w, -1.0);
  std::vector<double> run(n, 0.0);
  std::vector<double> busy_until(n, 0.0);
  std::vector<std::size_t> cursor(n, 0);
  std::priority_queue<double, std::vector<double>, std::greater<>> events;
  if (run_late) {
    for (int i = 0; i < n; ++i) {
      if (!plan.order[i].empty()) events.push(plan.late_start[plan.order[i][0]]);
    }
  }
  if (other_cycle > 0.0) {
    for (int j = 1; j < layout.microbatches(other); ++j) events.push(other_cycle * j);
  }
  if (entry_cycle > 0.0) {
    for (int j = 1; j < layout.microbatches(paced); ++j) events.push(entry_cycle * j);
  }

  const auto better = [&](std::int32_t x, std::int32_t y) {
    if (noise) return (*noise)[x] < (*noise)[y];
    if (layout.dir_of(x) != layout.dir_of(y)) return layout.dir_of(x) == Direction::kBackward;
    const int mx = layout.microbatch_of(x), my = layout.microbatch_of(y);
    if (mx != my) return mx < my;
    return x < y;
  };

  const auto start_op = [&](int i, std::int32_t id, double at) {
    finish[id] = at + layout.latency[id];
    busy_until[i] = finish[id];
    run[i] += layout.act_delta[id];
    s.rows[i].push_back(id);
    events.push(finish[id]);
  };

  int remaining = n * w;
  double now = 0.0;
  while (remaining > 0) {
    for (int i = 0; i < n; ++i) {
      if (busy_until[i] > now) continue;
      bool cap_stuck = false;
      if (cursor[i] < plan.order[i].size()) {
        const std::int32_t id = plan.order[i][cursor[i]];
        const std::int32_t d = layout.dep[id];
        const double delta = layout.act_delta[id];
        // Backward subtasks release activations; holding them to their late
        // starts keeps memory pinned for no scheduling gain, so under the
        // spread weave they run as soon as their dependency lands.
        const bool eager_bwd =
            (spread_mask & 4) && layout.dir_of(id) == Direction::kBackward;
        bool time_ok = !run_late || eager_bwd || plan.late_start[id] <= now;
        if (entry_cycle > 0.0 && d < 0 && layout.dir_of(id) == Direction::kForward &&
            now < entry_cycle * layout.microbatch_of(id)) {
          time_ok = false;
        }
        const bool dep_ok = d < 0 || (finish[d] >= 0.0 && finish[d] <= now);
        const bool cap_ok = !(cap > 0.0 && delta > 0.0 && run[i] + delta > cap);
        if (time_ok && dep_ok && cap_ok) {
          start_op(i, id, now);
          --remaining;
          ++cursor[i];
          if (run_late && cursor[i] < plan.order[i].size()) {
            events.push(std::max(now, plan.late_start[plan.order[i][cursor[i]]]));
          }
          continue;
        }
        cap_stuck = time_ok && dep_ok && !cap_ok;
      }
      // Fillers may take the stage only if they hand it back before the next
      // reserved subtask's late start. When that subtask is blocked on the
      // activation cap instead, only releasing fillers are admitted — freeing
      // memory is the one way to unblock it.
      const double limit = cursor[i] < plan.order[i].size() && !cap_stuck
                               ? plan.late_start[plan.order[i][cursor[i]]]
                               : std::numeric_limits<double>::infinity();
      int best_slot = -1;
      for (int slot = 0; slot < static_cast<int>(pending[i].size()); ++slot) {
        const std::int32_t id = pending[i][slot];
        const double delta = layout.act_delta[id];
        if (cap_stuck && delta >= 0.0) continue;
        if (now + layout.latency[id] > limit) continue;
        const std::int32_t d = layout.dep[id];
        if (d >= 0 && !(finish[d] >= 0.0 && finish[d] <= now)) continue;
        if (other_cycle > 0.0 && d < 0 && layout.dir_of(id) == Direction::kForward &&
            now < other_cycle * layout.microbatch_of(id)) {
          continue;
        }
        if (cap > 0.0 && delta > 0.0 && run[i] + delta > cap) continue;
        if (best_slot < 0 || better(id, pending[i][best_slot])) best_slot = slot;
      }
      if (best_slot < 0) continue;
      const std::int32_t id = pending[i][best_slot];
      pending[i][best_slot] = pending[i].back();
      pending[i].pop_back();
      start_op(i, id, now);
      --remaining;
    }
    if (remaining == 0) break;
    if (events.empty()) {
      // Under a tight cap the build can deadlock: every runnable reservation
      // needs memory that only a blocked filler would free. The cap is a
      // shaping constraint here, not the layout's real capacity, so force the
      // tightest-deadline cap-blocked reservation through rather than wedge.
      int force = -1;
      for (int i = 0; i < n; ++i) {
        if (busy_until[i] > now || cursor[i] >= plan.order[i].size()) continue;
        const std::int32_t id = plan.order[i][cursor[i]];
        const std::int32_t d = layout.dep[id];
        if (run_late && plan.late_start[id] > now &&
            !((spread_mask & 4) && layout.dir_of(id) == Direction::kBackward)) {
          continue;
        }
        if (entry_cycle > 0.0 && d < 0 && layout.dir_of(id) == Direction::kForward &&
            now < entry_cycle * layout.microbatch_of(id)) {
          continue;
        }
        if (d >= 0 && !(finish[d] >= 0.0 && finish[d] <= now)) continue;
        if (force < 0 || plan.late_start[id] < plan.late_start[plan.order[force][cursor[force]]]) {
          force = i;
        }
      }
      if (force < 0) return {};
      const std::int32_t id = plan.order[force][cursor[force]];
      start_op(force, id, now);
      --remaining;
      ++cursor[force];
      if (run_late && cursor[force] < plan.order[force].size()) {
        events.push(std::max(now, plan.late_start[plan.order[force][cursor[force]]]));
      }
      continue;
    }
    now = events.top();
    while (!events.empty() && events.top() <= now) events.pop();
  }
  return s;
}

// Remaining dependency-chain length per subtask: its own latency plus the
// longest latency path through its consumers.
std::vector<double> chain_tails(const FusionLayout& layout) {
  const int total = layout.total_subtasks();
  std::vector<double> tail(layout.latency.begin(), layout.latency.end());
  std::vector<int> fanout(total, 0);
  for (int id = 0; id < total; ++id) {
    if (layout.dep[id] >= 0) ++fanout[layout.dep[id]];
  }
  std::vector<std::int32_t> ready;
  ready.reserve(total);
  for (int id = 0; id < total; ++id) {
    if (fanout[id] == 0) ready.push_back(id);
  }
  for (std::size_t k = 0; k < ready.size(); ++k) {
    const std::int32_t id = ready[k];
    const std::int32_t d = layout.dep[id];
    if (d < 0) continue;
    tail[d] = std::max(tail[d], layout.latency[d] + tail[id]);
    if (--fanout[d] == 0) ready.push_back(d);
  }
  return tail;
}

// Work-conserving list schedule that always picks the ready subtask with the
// longest remaining chain, the classic critical-path heuristic. `keys`, when
// set, replaces the chain lengths as the priority. Returns empty rows when
// the build wedges under a tight activation cap.
FusedSchedule cpm_schedule(const FusionLayout& layout, const std::vector<double>* keys) {
  const int n = layout.num_stages;
  const int w = layout.row_width();
  const double cap = layout.activation_capacity;
  const std::vector<double> tail = keys ? std::vector<double>() : chain_tails(layout);
  const std::vector<double>& key = keys ? *keys : tail;

  FusedSchedule s;
  s.rows.assign(n, {});
  std::vector<std::vector<std::int32_t>> pending(n);
  for (int i = 0; i < n; ++i) {
    s.rows[i].reserve(w);
    pending[i].reserve(w);
    for (int local = 0; local < w; ++local) pending[i].push_back(i * w + local);
  }

  std::vector<double> finish(static_cast<std::size_t>(n) * w, -1.0);
  std::vector<double> run(n, 0.0);
  std::vector<double> busy_until(n, 0.0);
  std::priority_queue<double, std::vector<double>, std::greater<>> events;

  int remaining = n * w;
  double now = 0.0;
  while (remaining > 0) {
    for (int i = 0; i < n; ++i) {
      if (busy_until[i] > now) continue;
      int best_slot = -1;
      for (int slot = 0; slot < static_cast<int>(pending[i].size()); ++slot) {
        const std::int32_t id = pending[i][slot];
        const std::int32_t d = layout.dep[id];
        if (d >= 0 && !(finish[d] >= 0.0 && finish[d] <= now)) continue;
        const double delta = layout.act_delta[id];
        if (cap > 0.0 && delta > 0.0 && run[i] + delta > cap) continue;
        const std::int32_t cur = best_slot < 0 ? -1 : pending[i][best_slot];
        if (cur < 0 || key[id] > key[cur] || (key[id] == key[cur] && id < cur)) best_slot = slot;
      }
      if (best_slot < 0) continue;
      const std::int32_t id = pending[i][best_slot];
      pending[i][best_slot] = pending[i].back();
      pending[i].pop_back();
      finish[id] = now + layout.latency[id];
      busy_until[i] = finish[id];
      run[i] += layout.act_delta[id];
      s.rows[i].push_back(id);
      events.push(finish[id]);
      --remaining;
    }
    if (remaining == 0) break;
    if (events.empty()) return {};
    now = events.top();
    while (!events.empty() && events.top() <= now) events.pop();
  }
  return s;
}

// In-place random first-improvement descent that drifts across equal-energy
// plateaus. Bounded by `draws` candidate swaps; stops once the energy reaches
// `stop_at`. Returns the final energy; the schedule never gets worse.
double polish_descent(FusedSchedule& s, const FusionLayout& layout, Rng& rng, long draws,
                      double stop_at) {
  const int n = layout.num_stages;
  const int w = layout.row_width();
  const double cap = layout.activation_capacity;
  ScheduleEvaluator eval(layout);
  eval.evaluate(s);
  double cur = eval.energy();
  for (long k = 0; k < draws && cur > stop_at; ++k) {
    const int i = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    const int p = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(w - 1)));
    auto& row = s.rows[i];
    const std::int32_t a = row[p];
    const std::int32_t b = row[p + 1];
    if (layout.dep[b] == a) continue;
    std::swap(row[p], row[p + 1]);
    const bool fits = cap <= 0.0 || row_peak(row, layout) <= cap;
    if (fits && eval.evaluate(s) && eval.energy() <= cur) {
      cur = eval.energy();
    } else {
      std::swap(row[p], row[p + 1]);
    }
  }
  return cur;
}

}  // namespace

FusedSchedule greedy_schedule(const FusionLayout& layout) {
  require_tables(layout);
  const int n = layout.num_stages;
  const int w = layout.row_width();
  const double cap = layout.activation_capacity;

  FusedSchedule s;
  s.rows.assign(n, {});
  std::vector<std::vector<std::int32_t>> pending(n);
  for (int i = 0; i < n; ++i) {
    s.rows[i].reserve(w);
    pending[i].reserve(w);
    for (int local = 0; local < w; ++local) pending[i].push_back(i * w + local);
  }

  std::vector<double> finish(static_cast<std::size_t>(n) * w, -1.0);
  std::vector<double> run(n, 0.0);
  using Event = std::pair<double, std::int32_t>;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> in_flight;

  // Priority: larger model first, then earlier micro-batch, backward before
  // forward. Ids break residual ties, so the trace is deterministic.
  const auto better = [&](std::int32_t x, std::int32_t y) {
    const double px = layout.model_params[layout.model_of(x)];
    const double py = layout.model_params[layout.model_of(y)];
    if (px != py) return px > py;
    const int mx = layout.microbatch_of(x), my = layout.microbatch_of(y);
    if (mx != my) return mx < my;
    if (layout.dir_of(x) != layout.dir_of(y)) return layout.dir_of(x) == Direction::kBackward;
    return x < y;
  };

  int remaining = n * w;
  double now = 0.0;
  while (remaining > 0) {
    for (int i = 0; i < n; ++i) {
      if (!s.rows[i].empty() && finish[s.rows[i].back()] > now) continue;  // stage busy
      int best_slot = -1;
      for (int slot = 0; slot < static_cast<int>(pending[i].size()); ++slot) {
        const std::int32_t id = pending[i][slot];
        const std::int32_t d = layout.dep[id];
        if (d >= 0 && !(finish[d] >= 0.0 && finish[d] <= now)) continue;
        const double delta = layout.act_delta[id];
        if (cap > 0.0 && delta > 0.0 && run[i] + delta > cap) continue;
        if (best_slot < 0 || better(id, pending[i][best_slot])) best_slot = slot;
      }
      if (best_slot < 0) continue;
      const std::int32_t id = pending[i][best_slot];
      pending[i][best_slot] = pending[i].back();
      pending[i].pop_back();
      finish[id] = now + layout.latency[id];
      run[i] += layout.act_delta[id];
      s.rows[i].push_back(id);
      in_flight.push({finish[id], id});
      --remaining;
    }
    if (remaining == 0) break;
    if (in_flight.empty()) {
      throw InfeasibleError("greedy schedule wedged: activation capacity below one micro-batch");
    }
    now = in_flight.top().first;
    while (!in_flight.empty() && in_flight.top().first <= now) in_flight.pop();
  }
  return s;
}

double lower_bound(const FusionLayout& layout) {
  require_tables(layout);
  const int depths[2] = {layout.n1, layout.n2};
  // arrival[m][d]: forward work strictly above logical depth d.
  // tail[m][d]: backward work strictly below it. Both precede/follow every
  // subtask of chunk d in any valid schedule.
  std::array<std::vector<double>, 2> arrival, tail;
  for (int m = 0; m < 2; ++m) {
    arrival[m].assign(depths[m], 0.0);
    tail[m].assign(depths[m], 0.0);
    for (int d = 1; d < depths[m]; ++d) {
      arrival[m][d] = arrival[m][d - 1] + layout.fwd_latency[m][d - 1];
      tail[m][d] = tail[m][d - 1] + layout.bwd_latency[m][d - 1];
    }
  }
  double bound = 0.0;
  for (int i = 0; i < layout.num_stages; ++i) {
    const int la = layout.logical_at(i, 0);
    const int lb = layout.logical_at(i, 1);
    const double work_a = layout.m1 * (layout.fwd_latency[0][la] + layout.bwd_latency[0][la]);
    const double work_b = layout.m2 * (layout.fwd_latency[1][lb] + layout.bwd_latency[1][lb]);
    const double chain_a = arrival[0][la] + work_a + tail[0][la];
    const double chain_b = arrival[1][lb] + work_b + tail[1][lb];
    const double combined = std::min(arrival[0][la], arrival[1][lb]) + work_a + work_b +
                            std::min(tail[0][la], tail[1][lb]);
    bound = std::max({bound, chain_a, chain_b, combined});
  }
  return bound;
}

FusedSchedule compute_neighbor(const FusedSchedule& s, const FusionLayout& layout, Rng& rng,
                               int swap_retry_limit) {
  require_tables(layout);
  if (const Verdict v = check_valid(s, layout); !v) {
    throw std::invalid_argument("compute_neighbor: invalid schedule: " + v.detail);
  }
  FusedSchedule out = s;
  ScheduleEvaluator eval(layout);
  SwapAttempt mv;
  const double e = random_valid_swap(out, layout, eval, rng, swap_retry_limit, mv,
                                     [](double) { return true; });
  if (std::isnan(e)) throw InfeasibleError("no valid neighbor within swap retry limit");
  return out;
}

AnnealResult anneal(const FusedSchedule& s0, const FusionLayout& layout,
                    const AnnealParams& params) {
  require_tables(layout);
  if (const Verdict v = check_valid(s0, layout); !v) {
    throw std::invalid_argument("anneal: invalid initial schedule: " + v.detail);
  }
  ScheduleEvaluator eval(layout);
  FusedSchedule cur = s0;
  eval.evaluate(cur);
  double e_cur = eval.energy();

  AnnealResult out;
  out.schedule = cur;
  out.energy = e_cur;

  Rng rng(params.seed);
  const double t0 = e_cur;
  double t = t0;
  SwapAttempt mv;
  while (t > params.epsilon * t0) {
    const double e_nb = random_valid_swap(cur, layout, eval, rng, params.swap_retry_limit, mv,
                                          [](double) { return true; });
    if (std::isnan(e_nb)) throw InfeasibleError("no valid neighbor within swap retry limit");
    ++out.steps;
    if (e_nb < out.energy) {
      out.energy = e_nb;
      out.schedule = cur;
    }
    bool accept = e_nb <= e_cur;
    if (!accept) accept = rng.next_double() < std::exp((e_cur - e_nb) / t);
    if (accept) {
      e_cur = e_nb;
      ++out.accepted;
    } else {
      undo_swap(cur, mv);
    }
    t *= params.alpha;
  }
  out.makespan = out.energy;
  out.peak_bytes = max_peak(out.schedule, layout);
  return out;
}

AnnealResult optimize_memory(const FusedSchedule& s0, const FusionLayout& layout,
                             const AnnealParams& params) {
  require_tables(layout);
  if (const Verdict v = check_valid(s0, layout); !v) {
    throw std::invalid_argument("optimize_memory: invalid initial schedule: " + v.detail);
  }
  ScheduleEvaluator eval(layout);
  FusedSchedule cur = s0;
  eval.evaluate(cur);
  const double budget = eval.energy() * (1.0 + 1e-12);  // makespan must not regress

  AnnealResult out;
  out.schedule = cur;
  out.makespan = eval.energy();
  out.energy = max_peak(cur, layout);
  out.peak_bytes = out.energy;
  if (out.energy <= 0.0) return out;  // nothing tracked; s0 is already optimal

  double m_cur = out.energy;
  Rng rng(params.seed);
  const double t0 = m_cur;
  double t = t0;
  SwapAttempt mv;
  while (t > params.epsilon * t0) {
    const double span_nb = random_valid_swap(cur, layout, eval, rng, params.swap_retry_limit, mv,
                                             [&](double e) { return e <= budget; });
    if (std::isnan(span_nb)) break;  // frozen: every admissible move exhausted
    ++out.steps;
    const double m_nb = max_peak(cur, layout);
    if (m_nb < out.energy || (m_nb == out.energy && span_nb < out.makespan)) {
      out.energy = m_nb;
      out.peak_bytes = m_nb;
      out.makespan = span_nb;
      out.schedule = cur;
    }
    bool accept = m_nb <= m_cur;
    if (!accept) accept = rng.next_double() < std::exp((m_cur - m_nb) / t);
    if (accept) {
      m_cur = m_nb;
      ++out.accepted;
    } else {
      undo_swap(cur, mv);
    }
    t *= params.alpha;
  }
  return out;
}

std::string SearchReport::to_text() const {
  char line[160];
  std::string out;
  const auto add = [&](const char* fmt, auto... args) {
    std::snprintf(line, sizeof(line), fmt, args...);
    out += line;
  };
  out += "fused schedule search\n";
  add("chains: %d\n", static_cast<int>(chain_energies.size()));
  add("lower_bound: %.9g\n", lb);
  add("serial_1f1b: %.9g\n", serial_energy);
  add("greedy: %.9g\n", greedy_energy);
  add("best_energy: %.9g (chain %d)\n", best_energy, best_chain);
  add("best_peak_bytes: %.9g\n", best_peak_bytes);
  if (best_energy > 0.0) add("speedup_vs_serial: %.4f\n", serial_energy / best_energy);
  if (lb > 0.0) add("gap_vs_lower_bound: %.4f\n", (best_energy - lb) / lb);
  for (std::size_t c = 0; c < chain_energies.size(); ++c) {
    add("chain %d: %.9g\n", static_cast<int>(c), chain_energies[c]);
  }
  return out;
}

SearchReport multi_seed_search(const FusionLayout& layout, const AnnealParams& params,
                               int num_chains) {
  require_tables(layout);
  if (num_chains <= 0) throw std::invalid_argument("multi_seed_search: num_chains must be > 0");

  const FusedSchedule start = greedy_schedule(layout);
  ScheduleEvaluator eval(layout);
  eval.evaluate(start);

  SearchReport rep;
  rep.greedy_energy = eval.energy();
  rep.serial_energy = serial_1f1b_of_both(layout);
  rep.lb = lower_bound(layout);
  rep.chain_energies.reserve(num_chains);

  // Chain 0 anneals from the greedy trace. Later chains rotate through
  // structured starting points — paced 1F1B weaves and critical-path list
  // schedules, polished by a bounded sideways descent toward the lower
  // bound. Adjacent transpositions alone cannot carry the search from the
  // greedy basin into those regions, so the diversity has to come from the
  // starting schedules.
  std::vector<FusedSchedule> pool;
  if (num_chains > 1) {
    const int big = layout.model_params[0] >= layout.model_params[1] ? 0 : 1;
    auto admit = [&](FusedSchedule cand) {
      if (!cand.rows.empty() && static_cast<bool>(check_valid(cand, layout))) {
        pool.push_back(std::move(cand));
      }
    };
    admit(woven_schedule(layout, big, false, nullptr));
    admit(woven_schedule(layout, big, true, nullptr));
    {
      // Spread weave built against the serial-1F1B memory envelope: capping
      // both models' in-flight activations at what serial execution would
      // hold gives the tie rule a low-peak candidate at equal energy.
      FusionLayout capped = layout;
      const std::vector<double> sp = serial_1f1b_peak_memory(layout);
      double envelope = *std::max_element(sp.begin(), sp.end());
      if (layout.activation_capacity > 0.0) {
        envelope = std::min(envelope, layout.activation_capacity);
      }
      capped.activation_capacity = envelope;
      admit(woven_schedule(capped, big, true, nullptr, 3));
    }
    admit(cpm_schedule(layout, nullptr));
    {
      Rng jit_rng(derive_seed(params.seed, 0x77));
      std::vector<double> keys(static_cast<std::size_t>(layout.total_subtasks()));
      for (double& k : keys) k = jit_rng.next_double();
      admit(woven_schedule(layout, big, false, &keys));
      std::vector<double> tails = chain_tails(layout);
      for (double& t : tails) t *= 1.0 + 0.04 * jit_rng.next_double();
      admit(cpm_schedule(layout, &tails));
    }

    std::vector<double> energy(pool.size());
    for (std::size_t v = 0; v < pool.size(); ++v) {
      eval.evaluate(pool[v]);
      energy[v] = eval.energy();
      if (std::getenv("FUSEPLAN_POOL_DEBUG")) {
        int peak_stage = 0;
        double pk = 0.0;
        for (int i = 0; i < layout.num_stages; ++i) {
          const double rp = row_peak(pool[v].rows[i], layout);
          if (rp > pk) { pk = rp; peak_stage = i; }
        }
        std::fprintf(stderr, "pool[%zu]: energy %.6f peak %.6g @stage %d | ", v, energy[v], pk,
                     peak_stage);
        double run2 = 0.0, best2 = 0.0;
        std::size_t upto = 0;
        const auto& prow = pool[v].rows[peak_stage];
        for (std::size_t p = 0; p < prow.size(); ++p) {
          run2 += layout.act_delta[prow[p]];
          if (run2 > best2) { best2 = run2; upto = p; }
        }
        int na = 0, nb = 0;
        for (std::size_t p = 0; p <= upto; ++p) {
          const std::int32_t id2 = prow[p];
          const int held = layout.act_delta[id2] > 0.0 ? 1 : -1;
          (layout.model_of(id2) == 0 ? na : nb) += held;
        }
        std::fprintf(stderr, "held A %d B %d at pos %zu/%zu\n", na, nb, upto, prow.size());
      }
    }
    std::vector<std::size_t> order(pool.size());
    for (std::size_t v = 0; v < pool.size(); ++v) order[v] = v;
    auto by_energy = [&](std::size_t a, std::size_t b) {
      return energy[a] < energy[b] || (energy[a] == energy[b] && a < b);
    };
    std::sort(order.begin(), order.end(), by_energy);
    const long total = layout.total_subtasks();
    const long draws = std::clamp(total * total / 4, 2000L, 5000000L);
    const double stop_at = rep.lb * (1.0 + 1e-4);
    Rng polish_rng(derive_seed(params.seed, 0x9e3));
    for (std::size_t r = 0; r < order.size() && r < 3; ++r) {
      energy[order[r]] = polish_descent(pool[order[r]], layout, polish_rng, draws, stop_at);
      if (energy[order[r]] <= stop_at) break;
    }
    std::sort(order.begin(), order.end(), by_energy);
    std::vector<FusedSchedule> ranked;
    ranked.reserve(pool.size());
    for (const std::size_t v : order) ranked.push_back(std::move(pool[v]));
    pool = std::move(ranked);
  }

  for (int c = 0; c < num_chains; ++c) {
    AnnealParams chain_params = params;
    chain_params.seed = derive_seed(params.seed, static_cast<std::uint64_t>(c));
    const FusedSchedule* s0 = &start;
    if (c > 0 && !pool.empty()) s0 = &pool[static_cast<std::size_t>(c - 1) % pool.size()];
    AnnealResult r = anneal(*s0, layout, chain_params);
    rep.chain_energies.push_back(r.energy);
    const bool wins = rep.best_chain < 0 || r.energy < rep.best_energy ||
                      (r.energy == rep.best_energy && r.peak_bytes < rep.best_peak_bytes);
    if (wins) {
      rep.best = std::move(r.schedule);
      rep.best_energy = r.energy;
      rep.best_peak_bytes = r.peak_bytes;
      rep.best_chain = c;
    }
  }
  return rep;
}

namespace {

struct OracleSearch {
  const FusionLayout& layout;
  int n, w, total;
  double cap;
  double lb;
  std::vector<std::vector<std::int32_t>> rows;
  std::vector<std::uint32_t> reach;  // reach[x] has bit y iff x reaches y (incl. x)
  std::uint32_t placed = 0;
  std::vector<double> run;
  double best_energy = std::numeric_limits<double>::infinity();
  FusedSchedule best;
  bool done = false;
  ScheduleEvaluator eval;
  FusedSchedule scratch;

  explicit OracleSearch(const FusionLayout& l)
      : layout(l),
        n(l.num_stages),
        w(l.row_width()),
        total(l.total_subtasks()),
        cap(l.activation_capacity),
        lb(lower_bound(l)),
        rows(n),
        reach(total),
        run(n, 0.0),
        eval(l) {
    for (auto& row : rows) row.reserve(w);
    for (int id = 0; id < total; ++id) reach[id] = 1u << id;
    // Transitive closure of the fixed data edges; row edges join during DFS.
    for (int pass = 0; pass < total; ++pass) {
      for (int id = 0; id < total; ++id) {
        const std::int32_t d = layout.dep[id];
        if (d >= 0) reach[d] |= reach[id];
      }
    }
  }

  void dfs(int q) {
    if (done) return;
    if (q == total) {
      scratch.rows = rows;
      eval.evaluate(scratch);
      const double e = eval.energy();
      if (e < best_energy) {
        best_energy = e;
        best = scratch;
        if (best_energy <= lb * (1.0 + 1e-12)) done = true;
      }
      return;
    }
    const int i = q / w;
    const int p = q % w;
    std::array<std::uint32_t, 16> saved{};
    for (int local = 0; local < w; ++local) {
      const std::int32_t c = i * w + local;
      if (placed & (1u << c)) continue;
      const std::int32_t d = layout.dep[c];
      // An unplaced same-stage producer would have to land after c: cycle.
      if (d >= 0 && !(placed & (1u << d)) && layout.stage_of(d) == i) continue;
      const double delta = layout.act_delta[c];
      if (cap > 0.0 && delta > 0.0 && run[i] + delta > cap) continue;
      bool edge_added = false;
      if (p > 0) {
        const std::int32_t u = rows[i][p - 1];
        if (reach[c] & (1u << u)) continue;  // c already reaches u
        std::copy(reach.begin(), reach.end(), saved.begin());
        for (int x = 0; x < total; ++x) {
          if (reach[x] & (1u << u)) reach[x] |= reach[c];
        }
        edge_added = true;
      }
      placed |= 1u << c;
      run[i] += delta;
      rows[i].push_back(c);
      dfs(q + 1);
      rows[i].pop_back();
      run[i] -= delta;
      placed &= ~(1u << c);
      if (edge_added) std::copy(saved.begin(), saved.begin() + total, reach.begin());
      if (done) return;
    }
  }
};

}  // namespace

OracleResult exhaustive_oracle(const FusionLayout& layout) {
  require_tables(layout);
  if (layout.total_subtasks() > 16) {
    throw std::invalid_argument("exhaustive_oracle: instance exceeds the 16-subtask guard");
  }
  OracleSearch search(layout);
  search.dfs(0);
  if (!std::isfinite(search.best_energy)) {
    throw InfeasibleError("exhaustive_oracle: no valid schedule exists");
  }
  return {search.best_energy, std::move(search.best)};
}

// TEMP: experiment shim, remove before release.
FusedSchedule debug_weave(const FusionLayout& layout, int paced, bool run_late, int spread_mask) {
  return woven_schedule(layout, paced, run_late, nullptr, spread_mask);
}

}  // namespace fuseplan
