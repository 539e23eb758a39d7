// Copyright 2026 The fuseplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseplan/gantt.hpp"

#include <algorithm>
#include <cstdarg>
#include <cstdio>
#include <vector>

namespace fuseplan {

namespace {

constexpr double kPlotLeft = 90.0;
constexpr double kPlotWidth = 1060.0;
constexpr double kTop = 48.0;
constexpr double kRowHeight = 24.0;
constexpr double kRectHeight = 18.0;
constexpr double kPanelGap = 56.0;
constexpr double kMemHeight = 150.0;
constexpr double kBottom = 46.0;

// fill by model, shade by direction: index [model][direction]
constexpr const char* kTaskFill[2][2] = {{"#aec7e8", "#1f77b4"},
                                         {"#ffbb78", "#ff7f0e"}};
constexpr const char* kStagePalette[8] = {"#4c78a8", "#f58518", "#54a24b",
                                          "#e45756", "#72b7b2", "#9d755d",
                                          "#b279a2", "#bab0ac"};

void appendf(std::string& out, const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  out += buf;
}

void append_text(std::string& out, double x, double y, const char* anchor,
                 const std::string& body) {
  appendf(out, "<text x=\"%.3f\" y=\"%.3f\" text-anchor=\"%s\" "
               "font-family=\"sans-serif\" font-size=\"11\">",
          x, y, anchor);
  out += body;
  out += "</text>\n";
}

void append_axis(std::string& out, double y, double makespan, double xscale) {
  appendf(out,
          "<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" "
          "stroke=\"#333\" stroke-width=\"1\"/>\n",
          kPlotLeft, y, kPlotLeft + kPlotWidth, y);
  for (int i = 0; i <= 8; ++i) {
    const double t = makespan * i / 8.0;
    const double x = kPlotLeft + t * xscale;
    appendf(out,
            "<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" "
            "stroke=\"#333\" stroke-width=\"1\"/>\n",
            x, y, x, y + 4.0);
    char label[48];
    std::snprintf(label, sizeof(label), "%.4g", t);
    append_text(out, x, y + 16.0, "middle", label);
  }
}

}  // namespace

std::string render_gantt(const FusedSchedule& s, const FusionLayout& layout) {
  const bool scaffold = s.rows.empty();
  ScheduleEvaluator eval(layout);
  if (!scaffold) {
    const Verdict verdict = check_valid(s, layout);
    if (verdict.kind != ViolationKind::kNone) {
      throw std::invalid_argument("render_gantt: invalid schedule: " + verdict.detail);
    }
    eval.evaluate(s);
  }

  const int stages = layout.num_stages;
  const double makespan = scaffold ? 1.0 : eval.energy();
  const double xscale = kPlotWidth / makespan;
  const double task_height = stages * kRowHeight;
  const double mem_top = kTop + task_height + kPanelGap;
  const double total_height = mem_top + kMemHeight + kBottom;
  const double total_width = kPlotLeft + kPlotWidth + 30.0;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  appendf(out,
          "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" "
          "height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
          total_width, total_height, total_width, total_height);

  append_text(out, kPlotLeft, 20.0, "start",
              "fuseplan fused schedule: " + layout.model_names[0] + " + " +
                  layout.model_names[1]);

  // Legend (circles, so task rects stay countable).
  double lx = kPlotLeft + kPlotWidth - 360.0;
  for (int model = 0; model < 2; ++model) {
    for (int d = 0; d < 2; ++d) {
      appendf(out,
              "<circle cx=\"%.3f\" cy=\"16\" r=\"5\" fill=\"%s\"/>\n",
              lx, kTaskFill[model][d]);
      append_text(out, lx + 9.0, 20.0, "start",
                  layout.model_names[static_cast<size_t>(model)] +
                      (d == 0 ? " fwd" : " bwd"));
      lx += 90.0;
    }
  }

  // Task panel: stage labels and row baselines.
  for (int stage = 0; stage < stages; ++stage) {
    const double row_y = kTop + stage * kRowHeight;
    append_text(out, kPlotLeft - 8.0, row_y + kRectHeight - 4.0, "end",
                "stage " + std::to_string(stage));
    appendf(out,
            "<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" "
            "stroke=\"#ddd\" stroke-width=\"1\"/>\n",
            kPlotLeft, row_y + kRectHeight + 1.0, kPlotLeft + kPlotWidth,
            row_y + kRectHeight + 1.0);
  }

  if (!scaffold) {
    for (int stage = 0; stage < stages; ++stage) {
      const double row_y = kTop + stage * kRowHeight;
      for (int id : s.rows[static_cast<size_t>(stage)]) {
        const double start = eval.start_of(id);
        const double len = layout.latency[static_cast<size_t>(id)];
        const int model = layout.model_of(id);
        const int d = layout.dir_of(id) == Direction::kForward ? 0 : 1;
        appendf(out,
                "<rect class=\"task\" x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" "
                "height=\"%.3f\" fill=\"%s\" stroke=\"#fff\" "
                "stroke-width=\"0.4\"/>\n",
                kPlotLeft + start * xscale, row_y,
                std::max(len * xscale, 0.6), kRectHeight, kTaskFill[model][d]);
      }
    }
  }
  append_axis(out, kTop + task_height + 8.0, makespan, xscale);

  // Memory panel: per-stage activation staircases plus the serial reference.
  const std::vector<double> serial_peaks = serial_1f1b_peak_memory(layout);
  const double serial_ref =
      serial_peaks.empty()
          ? 0.0
          : *std::max_element(serial_peaks.begin(), serial_peaks.end());
  std::vector<double> fused_peaks;
  if (!scaffold) fused_peaks = peak_memory(s, layout);
  double mem_max = serial_ref;
  for (double p : fused_peaks) mem_max = std::max(mem_max, p);
  if (mem_max <= 0.0) mem_max = 1.0;
  const double yscale = kMemHeight / mem_max;
  const double mem_base = mem_top + kMemHeight;

  append_text(out, kPlotLeft, mem_top - 10.0, "start",
              "activation memory per stage (bytes)");
  if (!scaffold) {
    for (int stage = 0; stage < stages; ++stage) {
      std::string points;
      char pt[64];
      double level = 0.0;
      std::snprintf(pt, sizeof(pt), "%.3f,%.3f ", kPlotLeft, mem_base);
      points += pt;
      for (int id : s.rows[static_cast<size_t>(stage)]) {
        const bool fwd = layout.dir_of(id) == Direction::kForward;
        const double t = fwd ? eval.start_of(id)
                             : eval.finish()[static_cast<size_t>(id)];
        const double x = kPlotLeft + t * xscale;
        std::snprintf(pt, sizeof(pt), "%.3f,%.3f ", x, mem_base - level * yscale);
        points += pt;
        level += layout.act_delta[static_cast<size_t>(id)];
        std::snprintf(pt, sizeof(pt), "%.3f,%.3f ", x, mem_base - level * yscale);
        points += pt;
      }
      std::snprintf(pt, sizeof(pt), "%.3f,%.3f", kPlotLeft + kPlotWidth,
                    mem_base - level * yscale);
      points += pt;
      appendf(out,
              "<polyline class=\"mem\" fill=\"none\" stroke=\"%s\" "
              "stroke-width=\"1.2\" opacity=\"0.85\" points=\"",
              kStagePalette[stage % 8]);
      out += points;
      out += "\"/>\n";
    }
  }
  appendf(out,
          "<line class=\"serial-ref\" x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" "
          "y2=\"%.3f\" stroke=\"#d62728\" stroke-width=\"1.2\" "
          "stroke-dasharray=\"6 4\"/>\n",
          kPlotLeft, mem_base - serial_ref * yscale, kPlotLeft + kPlotWidth,
          mem_base - serial_ref * yscale);
  char ref_label[64];
  std::snprintf(ref_label, sizeof(ref_label), "serial 1F1B peak %.4g", serial_ref);
  append_text(out, kPlotLeft + kPlotWidth, mem_base - serial_ref * yscale - 6.0,
              "end", ref_label);
  append_axis(out, mem_base + 8.0, makespan, xscale);

  out += "</svg>\n";
  return out;
}

}  // namespace fuseplan
