// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "fuseplan/genfuse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "fuseplan/errors.hpp"
#include "fuseplan/rng.hpp"

namespace fuseplan {

namespace {

// Standard normal quantile at 0.999; fixes the lognormal shape from the
// P99.9/median ratio.
constexpr double kZ999 = 3.090232306167813;
constexpr double kKvSlack = 1e-6;  // bytes; absorbs accumulated float error
constexpr double kInf = std::numeric_limits<double>::infinity();

double prefill_seconds(const GenSimConfig& cfg, int tokens) {
  if (tokens < 1) return 0.0;  // empty prompt: nothing to prefill
  return subtask_latency(cfg.actor, cfg.actor.num_layers, tokens, 1, Direction::kForward,
                         cfg.cost) /
         cfg.instance_gpus;
}

double score_seconds(const GenSimConfig& cfg, int tokens) {
  double total = 0.0;
  for (const InferenceTask& task : cfg.tasks) {
    total += subtask_latency(task.model, task.model.num_layers, tokens, 1,
                             Direction::kForward, cfg.cost) /
             cfg.instance_gpus;
  }
  return total;
}

void validate_config(const GenSimConfig& cfg) {
  validate(cfg.actor);
  validate(cfg.cost);
  for (const InferenceTask& task : cfg.tasks) validate(task.model);
  if (cfg.num_instances < 1 || cfg.instance_gpus < 1) {
    throw std::invalid_argument("GenSimConfig: need at least one instance and one GPU");
  }
  if (cfg.cluster.bs_max < 1) throw std::invalid_argument("GenSimConfig: bs_max must be >= 1");
  if (cfg.cluster.interconnect_bandwidth <= 0.0) {
    throw std::invalid_argument("GenSimConfig: interconnect bandwidth must be positive");
  }
}

int event_rank(const std::string& kind) {
  if (kind == "admit") return 0;
  if (kind == "finish") return 1;
  if (kind == "trigger") return 2;
  if (kind == "migrate_out") return 3;
  if (kind == "migrate_in") return 4;
  if (kind == "join_inference") return 5;
  if (kind == "gen_end") return 6;
  return 7;  // inf_end
}

void sort_events(std::vector<GenTimelineEvent>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const GenTimelineEvent& a, const GenTimelineEvent& b) {
                     if (a.time != b.time) return a.time < b.time;
                     const int ra = event_rank(a.kind), rb = event_rank(b.kind);
                     if (ra != rb) return ra < rb;
                     if (a.instance != b.instance) return a.instance < b.instance;
                     return a.sample < b.sample;
                   });
}

struct Inflight {
  int sample = 0;      // index into the batch
  double remaining = 0.0;  // tokens left to decode
};

struct InstanceSim {
  int id = 0;
  double now = 0.0;
  double kv_used = 0.0;
  std::vector<Inflight> inflight;
  std::vector<int> queue;  // batch indices awaiting KV admission
  std::size_t queue_head = 0;
};

// Per-instance generation dynamics. Instances only interact at the single
// migration instant, so each one advances independently to a horizon; the
// fused simulation cuts at the trigger, mutates state, and resumes.
class Simulation {
 public:
  Simulation(const std::vector<GenSample>& batch, const GenSimConfig& cfg)
      : batch_(batch), cfg_(cfg), finish_(batch.size(), -1.0) {
    instances_.resize(cfg.num_instances);
    for (int i = 0; i < cfg.num_instances; ++i) instances_[i].id = i;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      instances_[s % cfg.num_instances].queue.push_back(static_cast<int>(s));
    }
  }

  void run(double horizon) {
    for (InstanceSim& ins : instances_) step(ins, horizon);
  }

  GenState snapshot(double time) const {
    GenState st;
    st.time = time;
    for (const InstanceSim& ins : instances_) {
      for (const Inflight& f : ins.inflight) {
        const GenSample& s = batch_[f.sample];
        const int generated = std::clamp(
            static_cast<int>(std::llround(s.target_output_len - f.remaining)), 0,
            s.target_output_len);
        st.samples.push_back({s.id, ins.id, s.kv_bytes, generated, s.prompt_len, true});
      }
      for (std::size_t q = ins.queue_head; q < ins.queue.size(); ++q) {
        const GenSample& s = batch_[ins.queue[q]];
        st.samples.push_back({s.id, ins.id, s.kv_bytes, 0, s.prompt_len, false});
      }
    }
    std::sort(st.samples.begin(), st.samples.end(),
              [](const GenState::Remaining& a, const GenState::Remaining& b) {
                return a.id < b.id;
              });
    return st;
  }

  // Moves the planned samples onto the destinations and pauses those
  // instances for the plan's overhead. In-flight samples keep their decode
  // progress; a sample no destination can hold stays where it is.
  void apply_migration(const MigrationPlan& plan, double trigger_time) {
    std::vector<char> is_dest(instances_.size(), 0);
    for (const int d : plan.destinations) is_dest[d] = 1;
    std::vector<char> moving(batch_.size(), 0);
    for (const int id : plan.migrated) moving.at(index_of(id)) = 1;

    for (const int d : plan.destinations) {
      instances_[d].now = std::max(instances_[d].now, trigger_time) + plan.overhead;
    }

    std::vector<Inflight> admitted;
    std::vector<int> queued;
    for (InstanceSim& ins : instances_) {
      if (is_dest[ins.id]) continue;
      for (std::size_t k = 0; k < ins.inflight.size();) {
        if (moving[ins.inflight[k].sample]) {
          admitted.push_back(ins.inflight[k]);
          ins.kv_used -= batch_[ins.inflight[k].sample].kv_bytes;
          source_of_[ins.inflight[k].sample] = ins.id;
          ins.inflight.erase(ins.inflight.begin() + k);
        } else {
          ++k;
        }
      }
      for (std::size_t q = ins.queue_head; q < ins.queue.size();) {
        if (moving[ins.queue[q]]) {
          queued.push_back(ins.queue[q]);
          source_of_[ins.queue[q]] = ins.id;
          ins.queue.erase(ins.queue.begin() + q);
        } else {
          ++q;
        }
      }
    }

    const double cap = cfg_.cluster.kv_capacity_per_instance;
    std::sort(admitted.begin(), admitted.end(), [this](const Inflight& a, const Inflight& b) {
      if (a.remaining != b.remaining) return a.remaining > b.remaining;
      return a.sample < b.sample;
    });
    for (const Inflight& f : admitted) {
      InstanceSim* best = nullptr;
      for (const int d : plan.destinations) {
        InstanceSim& ins = instances_[d];
        if (cap > 0.0 && ins.kv_used + batch_[f.sample].kv_bytes > cap + kKvSlack) continue;
        if (best == nullptr || ins.inflight.size() < best->inflight.size() ||
            (ins.inflight.size() == best->inflight.size() && ins.id < best->id)) {
          best = &ins;
        }
      }
      InstanceSim& back = instances_[source_of_[f.sample]];
      if (best == nullptr) {  // nothing can hold it; not actually migrated
        back.inflight.push_back(f);
        back.kv_used += batch_[f.sample].kv_bytes;
        continue;
      }
      best->inflight.push_back(f);
      best->kv_used += batch_[f.sample].kv_bytes;
      events_.push_back({trigger_time, back.id, "migrate_out", batch_[f.sample].id});
      events_.push_back({trigger_time, best->id, "migrate_in", batch_[f.sample].id});
    }
    for (const int s : queued) {
      InstanceSim* best = nullptr;
      for (const int d : plan.destinations) {
        InstanceSim& ins = instances_[d];
        const std::size_t depth = ins.queue.size() - ins.queue_head;
        if (best == nullptr || depth < best->queue.size() - best->queue_head) best = &ins;
      }
      best->queue.push_back(s);
      events_.push_back({trigger_time, source_of_[s], "migrate_out", batch_[s].id});
      events_.push_back({trigger_time, best->id, "migrate_in", batch_[s].id});
    }
  }

  const std::vector<double>& finish_times() const { return finish_; }
  const std::vector<InstanceSim>& instances() const { return instances_; }
  std::vector<GenTimelineEvent> take_events() { return std::move(events_); }

 private:
  int index_of(int sample_id) const {
    for (std::size_t s = 0; s < batch_.size(); ++s) {
      if (batch_[s].id == sample_id) return static_cast<int>(s);
    }
    throw std::invalid_argument("unknown sample id in migration plan");
  }

  void step(InstanceSim& ins, double horizon) {
    const double cap = cfg_.cluster.kv_capacity_per_instance;
    for (;;) {
      if (ins.now > horizon) return;  // a blocking prefill ran past the cut
      while (ins.queue_head < ins.queue.size()) {
        const int s = ins.queue[ins.queue_head];
        const double kv = batch_[s].kv_bytes;
        if (cap > 0.0 && ins.kv_used + kv > cap + kKvSlack) break;
        ++ins.queue_head;
        ins.kv_used += kv;
        events_.push_back({ins.now, ins.id, "admit", batch_[s].id});
        ins.now += prefill_seconds(cfg_, batch_[s].prompt_len);
        ins.inflight.push_back(
            {s, static_cast<double>(batch_[s].target_output_len - batch_[s].generated)});
      }
      if (ins.inflight.empty()) {
        if (ins.queue_head < ins.queue.size()) {
          throw InfeasibleError("generation wedged: KV capacity below a single sample");
        }
        return;
      }
      const double per_token =
          cfg_.cost.decode_step_base *
          std::max(1.0, static_cast<double>(ins.inflight.size()) / cfg_.cluster.bs_max);
      double min_rem = kInf;
      for (const Inflight& f : ins.inflight) min_rem = std::min(min_rem, f.remaining);
      const double t_next = ins.now + min_rem * per_token;
      if (t_next > horizon) {
        if (ins.now < horizon) {
          const double tokens = (horizon - ins.now) / per_token;
          for (Inflight& f : ins.inflight) f.remaining -= tokens;
          ins.now = horizon;
        }
        return;
      }
      ins.now = t_next;
      for (Inflight& f : ins.inflight) f.remaining -= min_rem;
      for (std::size_t k = 0; k < ins.inflight.size();) {
        if (ins.inflight[k].remaining <= 0.0) {
          const int s = ins.inflight[k].sample;
          finish_[s] = ins.now;
          ins.kv_used -= batch_[s].kv_bytes;
          events_.push_back({ins.now, ins.id, "finish", batch_[s].id});
          ins.inflight.erase(ins.inflight.begin() + k);
        } else {
          ++k;
        }
      }
    }
  }

  const std::vector<GenSample>& batch_;
  const GenSimConfig& cfg_;
  std::vector<double> finish_;
  std::vector<InstanceSim> instances_;
  std::vector<GenTimelineEvent> events_;
  std::map<int, int> source_of_;  // sample index -> source instance during migration
};

// Fluid drain of the scoring work: each sample's work becomes available at
// its generation finish, and joined instances drain the backlog at unit rate.
// Both summations follow event order so equality checks stay exact.
double integrate_inference(const std::vector<std::pair<double, double>>& avail,
                           const std::vector<double>& joins, int num_instances) {
  struct Point {
    double time;
    int kind;  // 0 = availability, 1 = join
    double work;
  };
  std::vector<Point> points;
  points.reserve(avail.size() + joins.size());
  for (const auto& [t, w] : avail) points.push_back({t, 0, w});
  for (const double t : joins) points.push_back({t, 1, 0.0});
  std::stable_sort(points.begin(), points.end(), [](const Point& a, const Point& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.kind < b.kind;
  });

  double total = 0.0;
  for (const Point& p : points) total += p.work;
  if (total <= 0.0) return points.empty() ? 0.0 : points.back().time;

  double t_prev = 0.0, available = 0.0, drained = 0.0;
  int rate = 0;
  for (const Point& p : points) {
    if (rate > 0 && p.time > t_prev) {
      const double can = drained + rate * (p.time - t_prev);
      if (available == total && can >= total) {
        return t_prev + (total - drained) / rate;
      }
      drained = std::min(can, available);
    }
    t_prev = p.time;
    if (p.kind == 0) {
      available += p.work;
    } else {
      ++rate;
    }
  }
  (void)num_instances;
  return t_prev + (total - drained) / rate;
}

GenStageResult assemble(Simulation& sim, const std::vector<GenSample>& batch,
                        const GenSimConfig& cfg, std::vector<double> joins,
                        std::vector<GenTimelineEvent> extra) {
  GenStageResult out;
  out.finish_time = sim.finish_times();
  out.gen_end = 0.0;
  for (const double f : out.finish_time) out.gen_end = std::max(out.gen_end, f);

  std::vector<std::pair<double, double>> avail;
  avail.reserve(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    avail.push_back({out.finish_time[s],
                     score_seconds(cfg, batch[s].prompt_len + batch[s].target_output_len)});
  }
  std::sort(avail.begin(), avail.end());
  out.inf_end = integrate_inference(avail, joins, cfg.num_instances);
  out.total = std::max(out.gen_end, out.inf_end);

  out.events = sim.take_events();
  for (GenTimelineEvent& e : extra) out.events.push_back(std::move(e));
  for (const double t : joins) out.events.push_back({t, -1, "join_inference", -1});
  out.events.push_back({out.gen_end, -1, "gen_end", -1});
  out.events.push_back({out.inf_end, -1, "inf_end", -1});
  sort_events(out.events);
  return out;
}

}  // namespace

std::vector<int> load_length_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("length file: cannot open " + path);
  std::vector<int> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos) continue;
    char* end = nullptr;
    const long v = std::strtol(line.c_str() + pos, &end, 10);
    while (end && *end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
    if (end == line.c_str() + pos || (end && *end) || v < 1 || v > 1000000000) {
      throw ConfigError("length file: bad line " + std::to_string(line_no) + " in " + path);
    }
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw ConfigError("length file: no lengths in " + path);
  return out;
}

std::vector<int> sample_lengths(const LengthDistribution& dist, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_lengths: n must be >= 1");
  if (dist.max_len < 1) throw std::invalid_argument("sample_lengths: max_len must be >= 1");
  std::vector<int> out;
  out.reserve(n);
  if (dist.kind == LengthDistribution::Kind::kEmpirical) {
    if (dist.empirical.empty()) {
      throw std::invalid_argument("sample_lengths: empirical distribution has no lengths");
    }
    for (int i = 0; i < n; ++i) {
      out.push_back(std::clamp(dist.empirical[i % dist.empirical.size()], 1, dist.max_len));
    }
    return out;
  }
  if (dist.median < 1.0 || dist.p999_ratio <= 1.0) {
    throw std::invalid_argument("sample_lengths: need median >= 1 and p999_ratio > 1");
  }
  const double mu = std::log(dist.median);
  const double sigma = std::log(dist.p999_ratio) / kZ999;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const double len = std::exp(mu + sigma * rng.next_normal());
    out.push_back(std::clamp(static_cast<int>(std::llround(len)), 1, dist.max_len));
  }
  return out;
}

std::vector<GenSample> make_batch(const LengthDistribution& dist, int n, int prompt_len,
                                  const ModelSpec& actor, std::uint64_t seed) {
  if (prompt_len < 0) throw std::invalid_argument("make_batch: prompt_len must be >= 0");
  const std::vector<int> lens = sample_lengths(dist, n, seed);
  const double kv_token = kv_bytes_per_token(actor);
  std::vector<GenSample> batch;
  batch.reserve(n);
  for (int i = 0; i < n; ++i) {
    batch.push_back({i, prompt_len, lens[i], 0, (prompt_len + lens[i]) * kv_token});
  }
  return batch;
}

MigrationPlan plan_migration(const GenState& state, int r_t, const GenSimConfig& cfg) {
  validate_config(cfg);
  MigrationPlan plan;
  plan.trigger_time = state.time;
  plan.r_t = r_t;
  if (state.samples.empty() || r_t < 1) {
    plan.no_op = true;
    return plan;
  }

  double kv_max = 0.0;
  for (const GenState::Remaining& s : state.samples) kv_max = std::max(kv_max, s.kv_bytes);
  int m = (r_t + cfg.cluster.bs_max - 1) / cfg.cluster.bs_max;
  if (cfg.cluster.kv_capacity_per_instance > 0.0) {
    m = std::max(m, static_cast<int>(std::ceil(
                        r_t * kv_max / cfg.cluster.kv_capacity_per_instance - 1e-9)));
  }
  m = std::max(m, 1);
  plan.m = m;
  if (m >= cfg.num_instances) {
    plan.no_op = true;
    return plan;
  }

  std::vector<std::pair<int, int>> counts(cfg.num_instances);  // (-count, id)
  for (int i = 0; i < cfg.num_instances; ++i) counts[i] = {0, i};
  for (const GenState::Remaining& s : state.samples) --counts[s.instance].first;
  std::sort(counts.begin(), counts.end());
  std::vector<char> is_dest(cfg.num_instances, 0);
  for (int k = 0; k < m; ++k) {
    plan.destinations.push_back(counts[k].second);
    is_dest[counts[k].second] = 1;
  }

  double transfer_bytes = 0.0, recompute_seconds = 0.0;
  for (const GenState::Remaining& s : state.samples) {
    if (is_dest[s.instance]) continue;
    plan.migrated.push_back(s.id);
    if (!s.admitted) continue;  // no KV materialized yet
    transfer_bytes += s.kv_bytes;
    recompute_seconds += prefill_seconds(cfg, s.prompt_len + s.generated);
  }
  const double transfer_seconds = transfer_bytes / cfg.cluster.interconnect_bandwidth;
  if (transfer_seconds <= recompute_seconds) {
    plan.mechanism = MigrationMechanism::kKvTransfer;
    plan.overhead = transfer_seconds;
  } else {
    plan.mechanism = MigrationMechanism::kRecomputePrefill;
    plan.overhead = recompute_seconds;
  }
  return plan;
}

GenStageResult simulate_serial(const std::vector<GenSample>& batch, const GenSimConfig& cfg) {
  validate_config(cfg);
  Simulation sim(batch, cfg);
  sim.run(kInf);
  double gen_end = 0.0;
  for (const double f : sim.finish_times()) gen_end = std::max(gen_end, f);
  // The whole pool turns to scoring only after generation fully drains.
  return assemble(sim, batch, cfg, std::vector<double>(cfg.num_instances, gen_end), {});
}

GenStageResult simulate_fused(const std::vector<GenSample>& batch, const GenSimConfig& cfg,
                              int r_t) {
  GenStageResult serial = simulate_serial(batch, cfg);
  if (r_t <= 0) return serial;

  double trigger = -1.0;
  int remaining = static_cast<int>(batch.size());
  if (remaining < r_t) trigger = 0.0;
  for (const GenTimelineEvent& e : serial.events) {
    if (trigger >= 0.0 || e.kind != "finish") continue;
    if (--remaining < r_t) trigger = e.time;
  }

  Simulation sim(batch, cfg);
  sim.run(trigger);
  const GenState state = sim.snapshot(trigger);
  MigrationPlan plan = plan_migration(state, r_t, cfg);
  if (plan.no_op) {
    serial.plan = plan;
    serial.triggered = true;
    return serial;
  }

  sim.apply_migration(plan, trigger);
  sim.run(kInf);

  std::vector<double> joins;
  joins.reserve(cfg.num_instances);
  for (const InstanceSim& ins : sim.instances()) joins.push_back(std::max(trigger, ins.now));

  std::vector<GenTimelineEvent> extra;
  extra.push_back({trigger, -1, "trigger", -1});
  GenStageResult out = assemble(sim, batch, cfg, std::move(joins), std::move(extra));
  out.plan = std::move(plan);
  out.triggered = true;
  return out;
}

SweepResult sweep_threshold(const std::vector<GenSample>& batch, const GenSimConfig& cfg,
                            std::vector<double> ratios) {
  if (ratios.empty()) {
    for (int pct = 5; pct <= 95; pct += 5) ratios.push_back(pct / 100.0);
  }
  SweepResult out;
  out.serial_total = simulate_serial(batch, cfg).total;
  out.curve.reserve(ratios.size());
  for (const double ratio : ratios) {
    const int r_t = static_cast<int>(std::llround(ratio * static_cast<double>(batch.size())));
    const GenStageResult r = simulate_fused(batch, cfg, r_t);
    out.curve.push_back({ratio, r_t, r.total});
    if (out.best_index < 0 || r.total < out.curve[out.best_index].fused_total) {
      out.best_index = static_cast<int>(out.curve.size()) - 1;
    }
  }
  return out;
}

std::string timeline_text(const GenStageResult& result) {
  std::string out;
  char line[128];
  for (const GenTimelineEvent& e : result.events) {
    std::snprintf(line, sizeof(line), "%.9f %d %s %d\n", e.time, e.instance, e.kind.c_str(),
                  e.sample);
    out += line;
  }
  return out;
}

}  // namespace fuseplan
