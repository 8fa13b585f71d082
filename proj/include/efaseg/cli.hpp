// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "efaseg/harness.hpp"
#include "efaseg/isr.hpp"
#include "efaseg/model.hpp"

namespace efaseg {

struct DataOptions {
  std::int64_t train_scenes = 200;
  std::int64_t eval_scenes = 50;
  std::int64_t size = 64;
  double noise = 0.04;
  std::uint64_t train_seed = 1;
  std::uint64_t eval_seed = 2;

  bool operator==(const DataOptions&) const = default;
};

// Sections model / schedule / train / data. The training ratios live in
// schedule.train; model.train_ratios is accepted only when it agrees.
struct RunConfig {
  ModelConfig model;
  ReductionSchedule schedule;
  TrainOptions train;
  DataOptions data;

  // Model config with train_ratios taken from the schedule.
  ModelConfig resolved_model() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& doc);

std::string render_run_config(const RunConfig& cfg);
// Accepts // and /* */ comments. Unknown keys throw ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

// Runs one subcommand. Normal output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace efaseg
