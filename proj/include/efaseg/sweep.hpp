// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "efaseg/harness.hpp"
#include "efaseg/isr.hpp"
#include "efaseg/model.hpp"

namespace efaseg {

struct SweepRow {
  ReductionSchedule schedule;
  std::string ratios;          // effective inference ratios
  double attention_macs = 0.0; // per image, global functioning only
  double total_macs = 0.0;     // per image
  EvalResult metrics;
  double miou_delta = 0.0;     // relative to the a = 1 baseline
};

struct SweepReport {
  SweepRow baseline;            // training ratios, a = 1
  std::vector<SweepRow> rows;   // requested schedules, in request order
};

// Evaluates the model at each effective-ratio set without touching its
// weights. Throws ConfigError for any set that is not a whole multiple of
// the training ratios.
SweepReport sweep(const Model& model, const std::vector<RatioSet>& effective, const Dataset& data);

// The twenty inference schedules of the reduction-ratio grid: encoder
// ratios {8,4,2,1}, {16,4,2,1}, {16,8,2,1}, {16,8,4,1}, {16,8,4,2} crossed
// with decoder ratios {1,2,4}, {1,2,8}, {1,4,8}, {2,4,8}.
std::vector<RatioSet> reduction_grid();

// One ratio string per non-empty line; '#' starts a comment.
std::vector<RatioSet> parse_schedule_list(const std::string& text);

std::string render_sweep(const SweepReport& report);
nlohmann::json to_json(const SweepRow& row);

}  // namespace efaseg
