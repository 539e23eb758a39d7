// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseplan/run_config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fuseplan {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!std::islower(static_cast<unsigned char>(c)) &&
        !std::isdigit(static_cast<unsigned char>(c)) && c != '_' && c != '.') {
      return false;
    }
  }
  return key.front() != '.' && key.back() != '.';
}

double unit_factor(const std::string& unit) {
  static const std::map<std::string, double> kUnits = {
      {"s", 1.0},       {"ms", 1e-3},     {"us", 1e-6},     {"ns", 1e-9},
      {"B", 1.0},       {"KB", 1e3},      {"MB", 1e6},      {"GB", 1e9},
      {"TB", 1e12},     {"B/s", 1.0},     {"KB/s", 1e3},    {"MB/s", 1e6},
      {"GB/s", 1e9},    {"TB/s", 1e12},
  };
  auto it = kUnits.find(unit);
  if (it == kUnits.end()) {
    throw ConfigError("unknown unit suffix '" + unit + "'");
  }
  return it->second;
}

}  // namespace

double parse_scalar(const std::string& text) {
  const std::string body = trim(text);
  if (body.empty()) throw ConfigError("empty numeric value");
  const char* begin = body.c_str();
  char* end = nullptr;
  const double magnitude = std::strtod(begin, &end);
  if (end == begin) {
    throw ConfigError("cannot parse number from '" + body + "'");
  }
  const std::string unit = trim(body.substr(static_cast<size_t>(end - begin)));
  if (unit.empty()) return magnitude;
  return magnitude * unit_factor(unit);
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), path);
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError(where + ": bad key '" + key + "'");
    if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
    if (!cfg.values_.emplace(key, value).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
  }
  return cfg;
}

bool RunConfig::has(const std::string& key) const {
  return values_.count(key) != 0;
}

double RunConfig::get_double(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(origin_ + ": missing key '" + key + "'");
  try {
    return parse_scalar(it->second);
  } catch (const ConfigError& e) {
    throw ConfigError(origin_ + ": key '" + key + "': " + e.what());
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long RunConfig::get_int(const std::string& key) const {
  const double v = get_double(key);
  const double rounded = std::nearbyint(v);
  if (std::abs(v - rounded) > 1e-6 || std::abs(rounded) > 9.0e18) {
    throw ConfigError(origin_ + ": key '" + key + "' is not an integer");
  }
  return static_cast<long long>(rounded);
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::string RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(origin_ + ": missing key '" + key + "'");
  return it->second;
}

std::string RunConfig::get_string(const std::string& key,
                                  const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  const std::string raw = get_string(key);
  std::vector<std::string> out;
  std::istringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      throw ConfigError(origin_ + ": key '" + key + "' has an empty list element");
    }
    out.push_back(item);
  }
  return out;
}

ModelSpec RunConfig::model(const std::string& name) const {
  const std::string base = "model." + name + ".";
  ModelSpec spec;
  spec.name = name;
  spec.num_layers = static_cast<int>(get_int(base + "num_layers"));
  spec.num_heads = static_cast<int>(get_int(base + "num_heads"));
  spec.hidden_size = static_cast<int>(get_int(base + "hidden_size"));
  spec.intermediate_size = static_cast<int>(get_int(base + "intermediate_size"));
  validate(spec);
  return spec;
}

ParallelStrategy RunConfig::strategy(const std::string& name) const {
  const std::string base = "strategy." + name + ".";
  ParallelStrategy s;
  s.dp = static_cast<int>(get_int(base + "dp", 1));
  s.pp = static_cast<int>(get_int(base + "pp", 1));
  s.tp = static_cast<int>(get_int(base + "tp", 1));
  return s;
}

ClusterSpec RunConfig::cluster() const {
  ClusterSpec c;
  c.num_gpus = static_cast<int>(get_int("cluster.num_gpus"));
  c.gpus_per_node = static_cast<int>(get_int("cluster.gpus_per_node", c.gpus_per_node));
  c.activation_capacity_per_stage =
      get_double("cluster.activation_capacity_per_stage", c.activation_capacity_per_stage);
  c.kv_capacity_per_instance =
      get_double("cluster.kv_capacity_per_instance", c.kv_capacity_per_instance);
  c.bs_max = static_cast<int>(get_int("cluster.bs_max", c.bs_max));
  c.interconnect_bandwidth =
      get_double("cluster.interconnect_bandwidth", c.interconnect_bandwidth);
  validate(c);
  return c;
}

CostModel RunConfig::cost() const {
  CostModel m;
  m.time_per_token_coeff = get_double("cost.time_per_token_coeff", m.time_per_token_coeff);
  m.backward_forward_ratio =
      get_double("cost.backward_forward_ratio", m.backward_forward_ratio);
  m.activation_bytes_coeff =
      get_double("cost.activation_bytes_coeff", m.activation_bytes_coeff);
  m.decode_step_base = get_double("cost.decode_step_base", m.decode_step_base);
  m.comm_bandwidth = get_double("cost.comm_bandwidth", m.comm_bandwidth);
  validate(m);
  return m;
}

AnnealParams RunConfig::anneal_params() const {
  AnnealParams p;
  p.alpha = get_double("anneal.alpha", p.alpha);
  p.epsilon = get_double("anneal.epsilon", p.epsilon);
  p.swap_retry_limit = static_cast<int>(get_int("anneal.swap_retry_limit", p.swap_retry_limit));
  p.seed = static_cast<std::uint64_t>(get_int("anneal.seed", 0));
  if (p.alpha <= 0.0 || p.alpha >= 1.0) {
    throw ConfigError(origin_ + ": anneal.alpha must lie in (0, 1)");
  }
  if (p.epsilon <= 0.0) throw ConfigError(origin_ + ": anneal.epsilon must be positive");
  return p;
}

LengthDistribution RunConfig::length_distribution() const {
  LengthDistribution dist;
  if (has("lengths.file")) {
    dist.kind = LengthDistribution::Kind::kEmpirical;
    dist.empirical = load_length_file(get_string("lengths.file"));
  } else {
    const std::string kind = get_string("lengths.kind", "lognormal");
    if (kind != "lognormal") {
      throw ConfigError(origin_ + ": lengths.kind must be 'lognormal' or lengths.file set");
    }
    dist.kind = LengthDistribution::Kind::kLognormal;
  }
  dist.median = get_double("lengths.median", dist.median);
  dist.p999_ratio = get_double("lengths.p999_ratio", dist.p999_ratio);
  dist.max_len = static_cast<int>(get_int("lengths.max_len", dist.max_len));
  if (dist.median <= 0.0 || dist.p999_ratio < 1.0 || dist.max_len < 1) {
    throw ConfigError(origin_ + ": invalid length distribution parameters");
  }
  return dist;
}

}  // namespace fuseplan
