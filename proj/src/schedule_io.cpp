// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseplan/schedule_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "fuseplan/run_config.hpp"

namespace fuseplan {

namespace {

constexpr char kHeader[] = "fuseplan-schedule v1";
constexpr char kColumns[] = "stage,position,model,group,microbatch,direction,latency,start,end";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

long long parse_ll(const std::string& text, const std::string& what, int lineno) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0') {
    throw ConfigError("schedule line " + std::to_string(lineno) + ": bad " + what +
                      " '" + text + "'");
  }
  return v;
}

}  // namespace

std::string schedule_to_text(const FusedSchedule& s, const FusionLayout& layout) {
  const Verdict verdict = check_valid(s, layout);
  if (verdict.kind != ViolationKind::kNone) {
    throw std::invalid_argument("schedule_to_text: invalid schedule: " + verdict.detail);
  }
  ScheduleEvaluator eval(layout);
  eval.evaluate(s);

  std::string out;
  out += kHeader;
  out += '\n';
  out += kColumns;
  out += '\n';
  char line[192];
  for (int stage = 0; stage < layout.num_stages; ++stage) {
    const auto& row = s.rows[static_cast<size_t>(stage)];
    for (size_t pos = 0; pos < row.size(); ++pos) {
      const int id = row[pos];
      const int model = layout.model_of(id);
      std::snprintf(line, sizeof(line), "%d,%zu,%d,%d,%d,%c,%.9f,%.9f,%.9f\n",
                    stage, pos, model, layout.group_at(stage, model),
                    layout.microbatch_of(id),
                    layout.dir_of(id) == Direction::kForward ? 'f' : 'b',
                    layout.latency[static_cast<size_t>(id)], eval.start_of(id),
                    eval.finish()[static_cast<size_t>(id)]);
      out += line;
    }
  }
  return out;
}

FusedSchedule schedule_from_text(const std::string& text, const FusionLayout& layout) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;

  if (!std::getline(in, line) || line != kHeader) {
    throw ConfigError("schedule file: missing '" + std::string(kHeader) + "' header");
  }
  ++lineno;
  if (!std::getline(in, line) || line != kColumns) {
    throw ConfigError("schedule file: missing column header");
  }
  ++lineno;

  const int width = layout.row_width();
  FusedSchedule s;
  s.rows.assign(static_cast<size_t>(layout.num_stages), {});
  std::vector<char> seen(static_cast<size_t>(layout.total_subtasks()), 0);

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 9) {
      throw ConfigError("schedule line " + std::to_string(lineno) +
                        ": expected 9 fields, got " + std::to_string(fields.size()));
    }
    const long long stage = parse_ll(fields[0], "stage", lineno);
    const long long pos = parse_ll(fields[1], "position", lineno);
    const long long model = parse_ll(fields[2], "model", lineno);
    const long long mb = parse_ll(fields[4], "microbatch", lineno);
    const std::string& dir = fields[5];

    if (stage < 0 || stage >= layout.num_stages) {
      throw ConfigError("schedule line " + std::to_string(lineno) + ": stage out of range");
    }
    if (model != 0 && model != 1) {
      throw ConfigError("schedule line " + std::to_string(lineno) + ": model must be 0 or 1");
    }
    if (mb < 0 || mb >= layout.microbatches(static_cast<int>(model))) {
      throw ConfigError("schedule line " + std::to_string(lineno) + ": microbatch out of range");
    }
    if (dir != "f" && dir != "b") {
      throw ConfigError("schedule line " + std::to_string(lineno) + ": direction must be f or b");
    }

    const int local = (model == 1 ? 2 * layout.m1 : 0) + 2 * static_cast<int>(mb) +
                      (dir == "b" ? 1 : 0);
    const int id = static_cast<int>(stage) * width + local;
    auto& row = s.rows[static_cast<size_t>(stage)];
    if (pos != static_cast<long long>(row.size())) {
      throw ConfigError("schedule line " + std::to_string(lineno) +
                        ": positions must be dense and sorted per stage");
    }
    if (seen[static_cast<size_t>(id)]) {
      throw ConfigError("schedule line " + std::to_string(lineno) + ": duplicate subtask");
    }
    seen[static_cast<size_t>(id)] = 1;
    row.push_back(id);
  }

  for (int stage = 0; stage < layout.num_stages; ++stage) {
    if (s.rows[static_cast<size_t>(stage)].size() != static_cast<size_t>(width)) {
      throw ConfigError("schedule file: stage " + std::to_string(stage) +
                        " has an incomplete row");
    }
  }
  return s;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace fuseplan
