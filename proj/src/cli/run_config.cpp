// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iterator>
#include <set>

#include "efaseg/cli.hpp"
#include "efaseg/error.hpp"

namespace efaseg {

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.train_ratios = schedule.train;
  return m;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  const TrainOptions& x = a.train;
  const TrainOptions& y = b.train;
  return a.model == b.model && a.schedule == b.schedule && a.data == b.data && x.steps == y.steps &&
         x.batch_size == y.batch_size && x.lr == y.lr && x.beta1 == y.beta1 && x.beta2 == y.beta2 &&
         x.adam_eps == y.adam_eps && x.weight_decay == y.weight_decay &&
         x.warmup_steps == y.warmup_steps && x.hflip == y.hflip && x.seed == y.seed;
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json model = to_json(cfg.model);
  model.erase("train_ratios");
  const TrainOptions& t = cfg.train;
  return {
      {"model", model},
      {"schedule", {{"train", format_ratios(cfg.schedule.train)},
                    {"inference", format_schedule(cfg.schedule)}}},
      {"train", {{"steps", t.steps},
                 {"batch_size", t.batch_size},
                 {"lr", t.lr},
                 {"beta1", t.beta1},
                 {"beta2", t.beta2},
                 {"adam_eps", t.adam_eps},
                 {"weight_decay", t.weight_decay},
                 {"warmup_steps", t.warmup_steps},
                 {"hflip", t.hflip},
                 {"seed", t.seed}}},
      {"data", {{"train_scenes", cfg.data.train_scenes},
                {"eval_scenes", cfg.data.eval_scenes},
                {"size", cfg.data.size},
                {"noise", cfg.data.noise},
                {"train_seed", cfg.data.train_seed},
                {"eval_seed", cfg.data.eval_seed}}},
  };
}

namespace {

void check_keys(const nlohmann::json& section, const std::string& name, const std::set<std::string>& keys) {
  if (!section.is_object()) throw ConfigError("section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    if (!keys.contains(key)) throw ConfigError("unknown key '" + name + "." + key + "'");
  }
}

template <typename T>
void read(const nlohmann::json& section, const std::string& prefix, const char* key, T& dst) {
  if (!section.contains(key)) return;
  try {
    dst = section.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(prefix + "." + key + ": " + e.what());
  }
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& doc) {
  check_keys(doc, "config", {"model", "schedule", "train", "data"});
  RunConfig cfg;
  bool model_ratios = false;
  if (doc.contains("model")) {
    cfg.model = model_config_from_json(doc.at("model"));
    model_ratios = doc.at("model").contains("train_ratios");
  }
  cfg.schedule.train = cfg.model.train_ratios;
  if (doc.contains("schedule")) {
    const auto& s = doc.at("schedule");
    check_keys(s, "schedule", {"train", "inference"});
    std::string text;
    if (s.contains("train")) {
      read(s, "schedule", "train", text);
      const RatioSet train = parse_ratios(text);
      if (model_ratios && train != cfg.model.train_ratios) {
        throw ConfigError("schedule.train disagrees with model.train_ratios");
      }
      cfg.schedule.train = train;
    }
    cfg.schedule.multiplier = RatioSet::ones();
    if (s.contains("inference")) {
      read(s, "schedule", "inference", text);
      cfg.schedule = parse_schedule(text, cfg.schedule.train);
    }
  }
  cfg.model.train_ratios = cfg.schedule.train;
  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    check_keys(t, "train", {"steps", "batch_size", "lr", "beta1", "beta2", "adam_eps", "weight_decay",
                            "warmup_steps", "hflip", "seed"});
    read(t, "train", "steps", cfg.train.steps);
    read(t, "train", "batch_size", cfg.train.batch_size);
    read(t, "train", "lr", cfg.train.lr);
    read(t, "train", "beta1", cfg.train.beta1);
    read(t, "train", "beta2", cfg.train.beta2);
    read(t, "train", "adam_eps", cfg.train.adam_eps);
    read(t, "train", "weight_decay", cfg.train.weight_decay);
    read(t, "train", "warmup_steps", cfg.train.warmup_steps);
    read(t, "train", "hflip", cfg.train.hflip);
    read(t, "train", "seed", cfg.train.seed);
  }
  if (doc.contains("data")) {
    const auto& d = doc.at("data");
    check_keys(d, "data", {"train_scenes", "eval_scenes", "size", "noise", "train_seed", "eval_seed"});
    read(d, "data", "train_scenes", cfg.data.train_scenes);
    read(d, "data", "eval_scenes", cfg.data.eval_scenes);
    read(d, "data", "size", cfg.data.size);
    read(d, "data", "noise", cfg.data.noise);
    read(d, "data", "train_seed", cfg.data.train_seed);
    read(d, "data", "eval_seed", cfg.data.eval_seed);
  }
  cfg.model.validate();
  cfg.schedule.validate();
  if (cfg.train.steps < 0 || cfg.train.batch_size < 1 || cfg.train.warmup_steps < 0) {
    throw ConfigError("train.steps/warmup_steps must be >= 0 and train.batch_size >= 1");
  }
  if (!(cfg.train.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (cfg.data.train_scenes < 1 || cfg.data.eval_scenes < 1) throw ConfigError("data scene counts must be positive");
  cfg.model.validate_input(cfg.data.size, cfg.data.size);
  return cfg;
}

std::string render_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig parse_run_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid: ") + e.what());
  }
  return run_config_from_json(doc);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return parse_run_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace efaseg
