// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "fuseplan/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fuseplan {

namespace {

struct Op {
  int chunk;
  int microbatch;
  Direction dir;
};

// Evaluates per-stage op orders under list semantics: each stage executes its
// order as soon as the intra-stage predecessor and the data dependency have
// finished. Returns entries in execution order per stage.
PipelineTaskTrace evaluate_orders(int n, int m, int k,
                                  const std::vector<std::vector<Op>>& orders,
                                  const std::vector<double>& fwd,
                                  const std::vector<double>& bwd) {
  const int per_dir = n * k * m;
  const int total = 2 * per_dir;
  auto id_of = [&](int stage, const Op& op) {
    return ((stage * k + op.chunk) * m + op.microbatch) * 2 +
           (op.dir == Direction::kBackward ? 1 : 0);
  };

  // dep[id]: unique data dependency or -1; pred[id]: intra-stage predecessor.
  std::vector<int> dep(total, -1), pred(total, -1);
  std::vector<double> lat(total, 0.0);
  for (int i = 0; i < n; ++i) {
    int prev = -1;
    for (const Op& op : orders[i]) {
      const int id = id_of(i, op);
      pred[id] = prev;
      prev = id;
      if (op.dir == Direction::kForward) {
        lat[id] = fwd[i] / k;
        if (i > 0) {
          dep[id] = id_of(i - 1, Op{op.chunk, op.microbatch, Direction::kForward});
        } else if (op.chunk > 0) {
          dep[id] = id_of(n - 1, Op{op.chunk - 1, op.microbatch, Direction::kForward});
        }
      } else {
        lat[id] = bwd[i] / k;
        if (i < n - 1) {
          dep[id] = id_of(i + 1, Op{op.chunk, op.microbatch, Direction::kBackward});
        } else if (op.chunk < k - 1) {
          dep[id] = id_of(0, Op{op.chunk + 1, op.microbatch, Direction::kBackward});
        } else {
          dep[id] = id_of(i, Op{op.chunk, op.microbatch, Direction::kForward});
        }
      }
    }
  }

  // finish times by memoized descent; the canonical orders are acyclic.
  std::vector<double> finish(total, -1.0);
  std::vector<int> stack;
  stack.reserve(total);
  for (int root = 0; root < total; ++root) {
    if (finish[root] >= 0.0) continue;
    stack.push_back(root);
    while (!stack.empty()) {
      const int id = stack.back();
      const int p = pred[id];
      const int d = dep[id];
      if (p >= 0 && finish[p] < 0.0) {
        stack.push_back(p);
        continue;
      }
      if (d >= 0 && finish[d] < 0.0) {
        stack.push_back(d);
        continue;
      }
      stack.pop_back();
      if (finish[id] >= 0.0) continue;
      const double ready = std::max(p >= 0 ? finish[p] : 0.0, d >= 0 ? finish[d] : 0.0);
      finish[id] = ready + lat[id];
    }
  }

  PipelineTaskTrace trace;
  trace.num_stages = n;
  trace.num_microbatches = m;
  trace.chunks_per_stage = k;
  trace.entries.reserve(total);
  for (int i = 0; i < n; ++i) {
    for (const Op& op : orders[i]) {
      const int id = id_of(i, op);
      trace.entries.push_back(TraceEntry{i, op.microbatch, op.chunk, op.dir,
                                         finish[id] - lat[id], finish[id]});
    }
  }
  return trace;
}

void check_args(int n, int m, const std::vector<double>& fwd, const std::vector<double>& bwd) {
  if (n <= 0 || m <= 0) throw std::invalid_argument("schedule: stages and micro-batches must be positive");
  if (static_cast<int>(fwd.size()) != n || static_cast<int>(bwd.size()) != n) {
    throw std::invalid_argument("schedule: latency arrays must have one entry per stage");
  }
  for (int i = 0; i < n; ++i) {
    if (fwd[i] <= 0.0 || bwd[i] <= 0.0) throw std::invalid_argument("schedule: latencies must be positive");
  }
}

std::int64_t exact_int(double v) {
  const double r = std::nearbyint(v);
  if (r != v) throw std::logic_error("measured_bubble: latencies must be integer-valued");
  return static_cast<std::int64_t>(r);
}

}  // namespace

double PipelineTaskTrace::makespan() const {
  double end = 0.0;
  for (const TraceEntry& e : entries) end = std::max(end, e.end);
  return end;
}

double PipelineTaskTrace::busy_time(int stage) const {
  double busy = 0.0;
  for (const TraceEntry& e : entries) {
    if (e.stage == stage) busy += e.end - e.start;
  }
  return busy;
}

Rational PipelineTaskTrace::measured_bubble(int stage) const {
  const std::int64_t span = exact_int(makespan());
  const std::int64_t busy = exact_int(busy_time(stage));
  return Rational(span - busy, span);
}

Rational bubble_fraction(int num_stages, int num_microbatches, int chunks_per_stage) {
  if (num_stages <= 0 || num_microbatches <= 0 || chunks_per_stage <= 0) {
    throw std::invalid_argument("bubble_fraction: arguments must be positive");
  }
  return Rational(num_stages - 1,
                  num_stages - 1 + static_cast<std::int64_t>(chunks_per_stage) * num_microbatches);
}

PipelineTaskTrace schedule_1f1b(int num_stages, int num_microbatches,
                                const std::vector<double>& fwd,
                                const std::vector<double>& bwd) {
  check_args(num_stages, num_microbatches, fwd, bwd);
  const int n = num_stages;
  const int m = num_microbatches;

  std::vector<std::vector<Op>> orders(n);
  for (int i = 0; i < n; ++i) {
    const int warmup = std::min(n - i, m);
    orders[i].reserve(2 * m);
    int f = 0, b = 0;
    for (; f < warmup; ++f) orders[i].push_back(Op{0, f, Direction::kForward});
    while (b < m) {
      orders[i].push_back(Op{0, b++, Direction::kBackward});
      if (f < m) orders[i].push_back(Op{0, f++, Direction::kForward});
    }
  }
  return evaluate_orders(n, m, 1, orders, fwd, bwd);
}

PipelineTaskTrace schedule_interleaved(int num_stages, int num_microbatches,
                                       int chunks_per_stage,
                                       const std::vector<double>& fwd,
                                       const std::vector<double>& bwd) {
  check_args(num_stages, num_microbatches, fwd, bwd);
  if (chunks_per_stage <= 0) throw std::invalid_argument("schedule_interleaved: chunks must be positive");
  if (chunks_per_stage == 1) return schedule_1f1b(num_stages, num_microbatches, fwd, bwd);
  const int n = num_stages;
  const int m = num_microbatches;
  const int k = chunks_per_stage;
  if (m % n != 0) {
    throw std::invalid_argument(
        "schedule_interleaved: micro-batch count must be divisible by the stage count when K > 1");
  }

  // Micro-op streams cycle through chunks in windows of N micro-batches;
  // backwards start from the deepest chunk.
  const int window = n * k;
  auto fwd_op = [&](int idx) {
    return Op{(idx % window) / n, (idx / window) * n + (idx % n), Direction::kForward};
  };
  auto bwd_op = [&](int idx) {
    return Op{k - 1 - (idx % window) / n, (idx / window) * n + (idx % n), Direction::kBackward};
  };

  const int total = k * m;
  std::vector<std::vector<Op>> orders(n);
  for (int i = 0; i < n; ++i) {
    const int warmup = std::min(2 * (n - 1 - i) + (k - 1) * n, total);
    orders[i].reserve(2 * total);
    int f = 0, b = 0;
    for (; f < warmup; ++f) orders[i].push_back(fwd_op(f));
    while (f < total) {
      orders[i].push_back(fwd_op(f++));
      orders[i].push_back(bwd_op(b++));
    }
    while (b < total) orders[i].push_back(bwd_op(b++));
  }
  return evaluate_orders(n, m, k, orders, fwd, bwd);
}

}  // namespace fuseplan
