// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "fuseplan/fusion.hpp"

namespace fuseplan {

// Textual schedule format, one file per fused schedule:
//
//   fuseplan-schedule v1
//   stage,position,model,group,microbatch,direction,latency,start,end
//   0,0,0,0,0,f,0.100000000,0.000000000,0.100000000
//   ...
//
// Rows are sorted by (stage, position); direction is `f` or `b`; the three
// trailing columns use nine fractional digits. The permutation alone defines
// the schedule: latency/start/end are advisory and recomputed on load, so a
// save/load round trip reproduces the schedule exactly.
std::string schedule_to_text(const FusedSchedule& s, const FusionLayout& layout);

// Parses the format above. The layout must describe the same fusion problem;
// malformed text or rows inconsistent with the layout raise ConfigError.
FusedSchedule schedule_from_text(const std::string& text, const FusionLayout& layout);

// Writes `content` to `path` via a temporary file and an atomic rename, so
// readers never observe a partially written file.
void write_file_atomic(const std::string& path, const std::string& content);

// Reads a whole file; throws ConfigError when it cannot be opened.
std::string read_file(const std::string& path);

}  // namespace fuseplan
