// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "efaseg/sweep.hpp"

#include <iomanip>
#include <sstream>

#include "efaseg/error.hpp"
#include "efaseg/flops.hpp"

namespace efaseg {

namespace {

SweepRow run_row(const Model& model, const ReductionSchedule& s, Phase phase, const Dataset& data) {
  SweepRow row;
  row.schedule = s;
  row.ratios = format_ratios(effective_ratios(s, phase));
  const ModelCostReport cost = model_cost(model.config, s, phase, data.front().height, data.front().width);
  row.attention_macs = cost.attention_macs();
  row.total_macs = cost.total().macs;
  row.metrics = evaluate(model, data, s, phase);
  return row;
}

}  // namespace

SweepReport sweep(const Model& model, const std::vector<RatioSet>& effective, const Dataset& data) {
  if (data.empty()) throw UsageError("cannot sweep on an empty dataset");
  std::vector<ReductionSchedule> schedules;
  for (const RatioSet& r : effective) {
    schedules.push_back(ReductionSchedule::factorize(model.config.train_ratios, r));
  }
  SweepReport report;
  report.baseline = run_row(model, model.config.training_schedule(), Phase::kTrain, data);
  for (const ReductionSchedule& s : schedules) {
    SweepRow row = run_row(model, s, Phase::kInference, data);
    row.miou_delta = row.metrics.miou - report.baseline.metrics.miou;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::vector<RatioSet> reduction_grid() {
  const std::array<std::array<std::int64_t, 4>, 5> enc{{{8, 4, 2, 1}, {16, 4, 2, 1}, {16, 8, 2, 1},
                                                        {16, 8, 4, 1}, {16, 8, 4, 2}}};
  const std::array<std::array<std::int64_t, 3>, 4> dec{{{1, 2, 4}, {1, 2, 8}, {1, 4, 8}, {2, 4, 8}}};
  std::vector<RatioSet> out;
  for (const auto& e : enc) {
    for (const auto& d : dec) out.push_back({e, d});
  }
  return out;
}

std::vector<RatioSet> parse_schedule_list(const std::string& text) {
  std::vector<RatioSet> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    out.push_back(parse_ratios(std::string_view(line).substr(first, last - first + 1)));
  }
  return out;
}

std::string render_sweep(const SweepReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(24) << "ratios" << std::right << std::setw(14) << "attn MACs"
      << std::setw(10) << "change" << std::setw(14) << "total MACs" << std::setw(9) << "acc"
      << std::setw(9) << "mIoU" << std::setw(9) << "delta" << '\n';
  auto line = [&](const SweepRow& r, bool base) {
    const double change = report.baseline.attention_macs > 0.0
                              ? 100.0 * (r.attention_macs / report.baseline.attention_macs - 1.0)
                              : 0.0;
    out << std::left << std::setw(24) << (base ? r.ratios + " (t)" : r.ratios) << std::right
        << std::setw(14) << format_fixed(r.attention_macs, 0) << std::setw(10)
        << (format_fixed(change, 1) + "%") << std::setw(14) << format_fixed(r.total_macs, 0)
        << std::setw(9) << format_fixed(r.metrics.pixel_accuracy, 4) << std::setw(9)
        << format_fixed(r.metrics.miou, 4) << std::setw(9) << format_fixed(r.miou_delta, 4) << '\n';
  };
  line(report.baseline, true);
  for (const SweepRow& r : report.rows) line(r, false);
  return out.str();
}

nlohmann::json to_json(const SweepRow& row) {
  nlohmann::json iou = nlohmann::json::array();
  for (const auto& v : row.metrics.class_iou) iou.push_back(v ? nlohmann::json(*v) : nlohmann::json());
  return {{"ratios", row.ratios},
          {"train", format_ratios(row.schedule.train)},
          {"multiplier", format_ratios(row.schedule.multiplier)},
          {"attention_macs", row.attention_macs},
          {"total_macs", row.total_macs},
          {"pixel_accuracy", row.metrics.pixel_accuracy},
          {"miou", row.metrics.miou},
          {"class_iou", iou},
          {"miou_delta", row.miou_delta}};
}

}  // namespace efaseg
