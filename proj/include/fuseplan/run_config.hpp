// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fuseplan/annealer.hpp"
#include "fuseplan/core.hpp"
#include "fuseplan/errors.hpp"
#include "fuseplan/genfuse.hpp"

namespace fuseplan {

// Flat key-value run configuration.
//
// Syntax: one `key = value` per line; `#` starts a comment; blank lines are
// ignored. Keys are dotted lowercase identifiers. Scalar values may carry an
// explicit unit suffix which is folded into the stored magnitude:
//
//   time   s, ms, us, ns          -> seconds
//   bytes  B, KB, MB, GB, TB      -> bytes (decimal, 1e3 steps)
//   rate   B/s ... TB/s           -> bytes per second
//
// Duplicate keys are rejected so typos cannot silently shadow earlier lines.
class RunConfig {
 public:
  static RunConfig load(const std::string& path);
  static RunConfig from_text(const std::string& text,
                             const std::string& origin = "<memory>");

  bool has(const std::string& key) const;

  // Scalar accessors; the no-fallback forms throw ConfigError when missing.
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  // Comma-separated list of identifiers.
  std::vector<std::string> get_list(const std::string& key) const;

  // Typed sections. `model` and `strategy` take the entity name, e.g.
  // model.actor.num_layers, strategy.actor.pp. Missing required keys throw
  // ConfigError naming the key.
  ModelSpec model(const std::string& name) const;
  ParallelStrategy strategy(const std::string& name) const;
  ClusterSpec cluster() const;
  CostModel cost() const;
  AnnealParams anneal_params() const;
  LengthDistribution length_distribution() const;

  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

// Parses a number with an optional unit suffix (see RunConfig). Exposed for
// tests; throws ConfigError on anything it cannot consume exactly.
double parse_scalar(const std::string& text);

}  // namespace fuseplan
