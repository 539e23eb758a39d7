// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "fuseplan/fusion.hpp"

namespace fuseplan {

// Renders a fused schedule as a standalone SVG document.
//
// The upper panel draws one row per physical stage with one
// `<rect class="task">` per subtask — these are the only rect elements in
// the document, so counting them recovers the subtask count. Fill color is
// keyed by model, with forward passes light and backward passes dark. The
// lower panel draws each stage's activation-memory staircase as a polyline
// (grow at forward start, release at backward end) plus a dashed horizontal
// reference at the serial-1F1B peak.
//
// An empty schedule (no rows at all) yields a valid scaffold with panels and
// axes only. A non-empty but invalid schedule raises invalid_argument. The
// output depends only on (schedule, layout); repeated calls are
// byte-identical.
std::string render_gantt(const FusedSchedule& s, const FusionLayout& layout);

}  // namespace fuseplan
