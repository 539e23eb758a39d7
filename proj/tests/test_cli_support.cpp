// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "fuseplan/annealer.hpp"
#include "fuseplan/gantt.hpp"
#include "fuseplan/run_config.hpp"
#include "fuseplan/schedule_io.hpp"

using namespace fuseplan;

namespace {

ModelSpec small_model(const std::string& name, int layers, int hidden) {
  ModelSpec spec;
  spec.name = name;
  spec.num_layers = layers;
  spec.num_heads = 8;
  spec.hidden_size = hidden;
  spec.intermediate_size = 4 * hidden;
  return spec;
}

FusionLayout small_layout() {
  ClusterSpec cluster;
  cluster.num_gpus = 8;
  return transform_problem(small_model("alpha", 8, 512), {2, 4, 1},
                           small_model("beta", 8, 384), {4, 2, 1},
                           /*global_batch=*/16, /*microbatch_size=*/1,
                           /*seq_len=*/512, cluster, CostModel{});
}

constexpr char kConfigText[] = R"(# demo config
model.alpha.num_layers = 8
model.alpha.num_heads = 8
model.alpha.hidden_size = 512
model.alpha.intermediate_size = 2048

strategy.alpha.dp = 2
strategy.alpha.pp = 4        # tp defaults to 1

cluster.num_gpus = 8
cluster.kv_capacity_per_instance = 8GB
cluster.interconnect_bandwidth = 100GB/s
cluster.bs_max = 16

cost.decode_step_base = 10ms
anneal.seed = 42
gen.tasks = ref, reward ,critic
workload.seq_len = 512
)";

}  // namespace

TEST_CASE("parse_scalar handles magnitudes and unit suffixes") {
  CHECK(parse_scalar("1.5") == 1.5);
  CHECK(parse_scalar("  -3 ") == -3.0);
  CHECK(parse_scalar("10 ms") == 0.01);
  CHECK(parse_scalar("5us") == 5.0 * 1e-6);
  CHECK(parse_scalar("7 ns") == 7.0 * 1e-9);
  CHECK(parse_scalar("2GB") == 2e9);
  CHECK(parse_scalar("3 KB") == 3e3);
  CHECK(parse_scalar("1.5 TB") == 1.5e12);
  CHECK(parse_scalar("100GB/s") == 1e11);
  CHECK(parse_scalar("4 B") == 4.0);
  CHECK(parse_scalar("1e-12 s") == 1e-12);

  CHECK_THROWS_AS(parse_scalar(""), ConfigError);
  CHECK_THROWS_AS(parse_scalar("abc"), ConfigError);
  CHECK_THROWS_AS(parse_scalar("3 parsecs"), ConfigError);
  CHECK_THROWS_AS(parse_scalar("3 GB/ms"), ConfigError);
}

TEST_CASE("RunConfig parses key-value lines with comments") {
  const RunConfig cfg = RunConfig::from_text(kConfigText);
  CHECK(cfg.get_int("model.alpha.num_layers") == 8);
  CHECK(cfg.get_int("strategy.alpha.pp") == 4);
  CHECK(cfg.get_double("cluster.kv_capacity_per_instance") == 8e9);
  CHECK(cfg.get_double("cost.decode_step_base") == 0.01);
  CHECK(cfg.has("anneal.seed"));
  CHECK_FALSE(cfg.has("anneal.alpha"));
  CHECK(cfg.get_int("missing.key", 7) == 7);
  CHECK(cfg.get_double("missing.key", 2.5) == 2.5);
  CHECK(cfg.get_string("missing.key", "x") == "x");

  const auto tasks = cfg.get_list("gen.tasks");
  REQUIRE(tasks.size() == 3);
  CHECK(tasks[0] == "ref");
  CHECK(tasks[1] == "reward");
  CHECK(tasks[2] == "critic");
}

TEST_CASE("RunConfig rejects malformed input") {
  CHECK_THROWS_AS(RunConfig::from_text("a.b = 1\na.b = 2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("just a line\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("Bad.Key = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text(".leading = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("empty.value =\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("k = 1\n")
                      .get_string("gone"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("k = 1.5\n").get_int("k"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("k = 1, ,2\n").get_list("k"), ConfigError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("RunConfig typed sections build validated structs") {
  const RunConfig cfg = RunConfig::from_text(kConfigText);

  const ModelSpec alpha = cfg.model("alpha");
  CHECK(alpha.name == "alpha");
  CHECK(alpha.hidden_size == 512);
  CHECK_THROWS_AS(cfg.model("ghost"), ConfigError);

  const ParallelStrategy strat = cfg.strategy("alpha");
  CHECK(strat.dp == 2);
  CHECK(strat.pp == 4);
  CHECK(strat.tp == 1);  // defaulted

  const ClusterSpec cluster = cfg.cluster();
  CHECK(cluster.num_gpus == 8);
  CHECK(cluster.gpus_per_node == 8);  // defaulted
  CHECK(cluster.bs_max == 16);
  CHECK(cluster.interconnect_bandwidth == 1e11);

  const CostModel cost = cfg.cost();
  CHECK(cost.decode_step_base == 0.01);
  CHECK(cost.backward_forward_ratio == 2.0);  // defaulted

  const AnnealParams params = cfg.anneal_params();
  CHECK(params.seed == 42);
  CHECK(params.alpha == doctest::Approx(0.98));
  CHECK_THROWS_AS(RunConfig::from_text("anneal.alpha = 1.5\n").anneal_params(),
                  ConfigError);

  const LengthDistribution dist = cfg.length_distribution();
  CHECK(dist.kind == LengthDistribution::Kind::kLognormal);
  CHECK(dist.median == 200.0);  // defaulted
  CHECK_THROWS_AS(RunConfig::from_text("lengths.kind = zipf\n").length_distribution(),
                  ConfigError);
}

TEST_CASE("schedule text round trip preserves the permutation exactly") {
  const FusionLayout layout = small_layout();

  AnnealParams params;
  params.seed = 17;
  const FusedSchedule greedy = greedy_schedule(layout);
  const AnnealResult annealed = anneal(greedy, layout, params);

  for (const FusedSchedule& s : {greedy, annealed.schedule}) {
    const std::string text = schedule_to_text(s, layout);
    const FusedSchedule back = schedule_from_text(text, layout);
    CHECK(back == s);
    CHECK(compute_energy(back, layout) == compute_energy(s, layout));
    // Serialization is itself deterministic.
    CHECK(schedule_to_text(back, layout) == text);
  }

  const std::string text = schedule_to_text(greedy, layout);
  CHECK(text.rfind("fuseplan-schedule v1\n", 0) == 0);
  CHECK(text.find("stage,position,model,group,microbatch,direction,latency,start,end") !=
        std::string::npos);
}

TEST_CASE("schedule_from_text rejects inconsistent rows") {
  const FusionLayout layout = small_layout();
  const std::string good = schedule_to_text(greedy_schedule(layout), layout);

  CHECK_THROWS_AS(schedule_from_text("not a header\n", layout), ConfigError);

  // Drop the last row: stage becomes incomplete.
  std::string truncated = good;
  truncated.erase(truncated.find_last_of('\n', truncated.size() - 2) + 1);
  CHECK_THROWS_AS(schedule_from_text(truncated, layout), ConfigError);

  // Duplicate the last row: repeated subtask.
  const size_t tail = good.find_last_of('\n', good.size() - 2) + 1;
  CHECK_THROWS_AS(schedule_from_text(good + good.substr(tail), layout), ConfigError);

  // Field count mismatch.
  CHECK_THROWS_AS(
      schedule_from_text("fuseplan-schedule v1\n"
                         "stage,position,model,group,microbatch,direction,latency,start,end\n"
                         "0,0,0,0,0,f\n",
                         layout),
      ConfigError);
}

TEST_CASE("schedule_to_text refuses invalid schedules") {
  const FusionLayout layout = small_layout();
  FusedSchedule s = greedy_schedule(layout);
  s.rows[0].clear();  // row no longer a permutation of its subtasks
  CHECK_THROWS_AS(schedule_to_text(s, layout), std::invalid_argument);
}

TEST_CASE("render_gantt draws one task rect per subtask") {
  const FusionLayout layout = small_layout();
  const FusedSchedule s = greedy_schedule(layout);
  const std::string svg = render_gantt(s, layout);

  size_t rects = 0;
  for (size_t at = svg.find("<rect class=\"task\""); at != std::string::npos;
       at = svg.find("<rect class=\"task\"", at + 1)) {
    ++rects;
  }
  CHECK(rects == static_cast<size_t>(layout.total_subtasks()));

  // The only rect elements are task rects.
  size_t any_rects = 0;
  for (size_t at = svg.find("<rect"); at != std::string::npos;
       at = svg.find("<rect", at + 1)) {
    ++any_rects;
  }
  CHECK(any_rects == rects);

  size_t staircases = 0;
  for (size_t at = svg.find("<polyline class=\"mem\""); at != std::string::npos;
       at = svg.find("<polyline class=\"mem\"", at + 1)) {
    ++staircases;
  }
  CHECK(staircases == static_cast<size_t>(layout.num_stages));

  CHECK(svg.find("class=\"serial-ref\"") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);

  CHECK(render_gantt(s, layout) == svg);
}

TEST_CASE("render_gantt scaffolds an empty schedule and rejects invalid ones") {
  const FusionLayout layout = small_layout();

  const std::string scaffold = render_gantt(FusedSchedule{}, layout);
  CHECK(scaffold.find("<svg") != std::string::npos);
  CHECK(scaffold.find("<rect") == std::string::npos);
  CHECK(scaffold.find("class=\"serial-ref\"") != std::string::npos);

  FusedSchedule bad = greedy_schedule(layout);
  bad.rows[0].clear();
  CHECK_THROWS_AS(render_gantt(bad, layout), std::invalid_argument);
}

TEST_CASE("write_file_atomic leaves no temporary behind") {
  const std::string path = "/tmp/fuseplan_test_atomic.txt";
  write_file_atomic(path, "hello\n");
  CHECK(read_file(path) == "hello\n");
  std::ifstream tmp(path + ".tmp");
  CHECK_FALSE(tmp.good());
  write_file_atomic(path, "replaced\n");
  CHECK(read_file(path) == "replaced\n");
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_file(path), ConfigError);
}
