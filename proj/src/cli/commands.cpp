// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>

#include "efaseg/checkpoint.hpp"
#include "efaseg/cli.hpp"
#include "efaseg/error.hpp"
#include "efaseg/flops.hpp"
#include "efaseg/kernels.hpp"
#include "efaseg/sweep.hpp"

namespace efaseg {

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

DataOptions data_options_of(const Checkpoint& ckpt) {
  DataOptions d;
  if (ckpt.extra.contains("data")) {
    const auto& j = ckpt.extra.at("data");
    d.eval_scenes = j.value("eval_scenes", d.eval_scenes);
    d.size = j.value("size", d.size);
    d.noise = j.value("noise", d.noise);
    d.eval_seed = j.value("eval_seed", d.eval_seed);
  }
  return d;
}

Dataset eval_data(const Checkpoint& ckpt, const std::string& dir) {
  if (!dir.empty()) return read_dataset(dir);
  const DataOptions d = data_options_of(ckpt);
  SceneParams p;
  p.height = p.width = d.size;
  p.num_classes = ckpt.model.config.num_classes;
  p.noise = d.noise;
  return generate_dataset(d.eval_scenes, p, d.eval_seed);
}

std::string metrics_table(const std::string& ratios, double attn_macs, double total_macs, const EvalResult& r) {
  std::ostringstream out;
  out << "schedule        " << ratios << '\n';
  out << "attention MACs  " << format_fixed(attn_macs, 0) << '\n';
  out << "total MACs      " << format_fixed(total_macs, 0) << '\n';
  out << "pixel accuracy  " << format_fixed(r.pixel_accuracy, 4) << '\n';
  out << "mIoU            " << format_fixed(r.miou, 4) << '\n';
  for (std::size_t c = 0; c < r.class_iou.size(); ++c) {
    out << "IoU class " << std::setw(3) << c << "   "
        << (r.class_iou[c] ? format_fixed(*r.class_iou[c], 4) : std::string("absent")) << '\n';
  }
  return out.str();
}

struct TrainArgs {
  std::string config;
  std::string out = "model.ckpt";
  std::string init;
  std::int64_t seed = -1;
  std::int64_t steps = -1;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
  if (a.steps >= 0) cfg.train.steps = a.steps;
  const ModelConfig mc = cfg.resolved_model();

  Model model;
  if (!a.init.empty()) {
    Checkpoint base = load_checkpoint(a.init);
    ModelConfig expect = base.model.config;
    expect.train_ratios = mc.train_ratios;
    expect.name = mc.name;
    if (!(expect == mc)) throw ConfigError("--init checkpoint architecture differs from the config");
    model = base.model;
    model.config = mc;
  } else {
    model = Model::init(mc, cfg.train.seed);
  }

  SceneParams p;
  p.height = p.width = cfg.data.size;
  p.num_classes = mc.num_classes;
  p.noise = cfg.data.noise;
  const Dataset data = generate_dataset(cfg.data.train_scenes, p, cfg.data.train_seed);

  const TrainResult result = train(model, data, cfg.train);
  Checkpoint ckpt;
  ckpt.model = model;
  ckpt.step = result.state.step;
  ckpt.seed = cfg.train.seed;
  ckpt.train_state = result.state;
  ckpt.extra["data"] = to_json(cfg)["data"];
  ckpt.extra["inference"] = format_ratios(effective_ratios(cfg.schedule, Phase::kInference));
  if (!result.loss_curve.empty()) ckpt.extra["final_loss"] = result.loss_curve.back();
  save_checkpoint(a.out, ckpt);

  std::ostringstream curve;
  curve << "step\tloss\n";
  curve << std::setprecision(17);
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) curve << i << '\t' << result.loss_curve[i] << '\n';
  write_text(a.out + ".loss.tsv", curve.str());

  out << "trained " << result.state.step << " steps";
  if (!result.loss_curve.empty()) out << ", final loss " << format_fixed(result.loss_curve.back(), 4);
  out << "\ncheckpoint " << a.out << " (" << file_digest(a.out) << ")\n";
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& schedule_text,
             bool json, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const ModelConfig& mc = ckpt.model.config;
  ReductionSchedule s = mc.training_schedule();
  Phase phase = Phase::kTrain;
  std::string text = schedule_text;
  if (text.empty() && ckpt.extra.contains("inference")) text = ckpt.extra.at("inference").get<std::string>();
  if (!text.empty()) {
    s = parse_schedule(text, mc.train_ratios);
    phase = Phase::kInference;
  }
  const Dataset data = eval_data(ckpt, data_dir);
  if (data.empty()) throw UsageError("evaluation dataset is empty");
  const ModelCostReport cost = model_cost(mc, s, phase, data.front().height, data.front().width);
  const EvalResult r = evaluate(ckpt.model, data, s, phase);
  if (json) {
    SweepRow row;
    row.schedule = s;
    row.ratios = format_ratios(effective_ratios(s, phase));
    row.attention_macs = cost.attention_macs();
    row.total_macs = cost.total().macs;
    row.metrics = r;
    out << to_json(row).dump() << '\n';
  } else {
    out << metrics_table(format_ratios(effective_ratios(s, phase)), cost.attention_macs(), cost.total().macs, r);
  }
  return kExitOk;
}

int cmd_sweep(const std::string& ckpt_path, const std::string& schedules_path, const std::string& data_dir,
              const std::string& report, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const std::vector<RatioSet> ratios =
      schedules_path.empty() ? reduction_grid() : parse_schedule_list(read_text(schedules_path));
  const Dataset data = eval_data(ckpt, data_dir);
  const SweepReport rep = sweep(ckpt.model, ratios, data);
  const std::string table = render_sweep(rep);
  out << table;
  if (!report.empty()) {
    std::ostringstream jl;
    for (const SweepRow& r : rep.rows) jl << to_json(r).dump() << '\n';
    write_text(report + ".jsonl", jl.str());
    write_text(report + ".txt", table);
  }
  return kExitOk;
}

struct FlopArgs {
  std::int64_t hw = 196;
  std::int64_t c = 128;
  std::int64_t r = 2;
  std::int64_t a = 1;
  std::string variant = "embedding_free";
  bool sr_projection = false;
  bool biased = false;
  std::string preset;
  bool json = false;
};

int cmd_analyze_flops(const FlopArgs& a, std::ostream& out) {
  std::vector<FlopReport> reports;
  if (!a.preset.empty()) {
    if (a.preset != "appendix-b") throw UsageError("unknown preset '" + a.preset + "'");
    reports = appendix_b_reports();
  } else {
    if (a.hw < 1 || a.c < 1) throw UsageError("--hw and --c must be positive");
    if (a.r < 1 || a.a < 1) throw UsageError("--r and --a must be >= 1");
    FlopReport rep = attention_cost(a.hw, a.c, a.r, a.a, parse_variant(a.variant), a.sr_projection, !a.biased);
    rep.label = std::string(to_string(parse_variant(a.variant))) + " r=" + std::to_string(a.r) +
                " a=" + std::to_string(a.a);
    reports.push_back(rep);
  }
  if (a.json) {
    for (const FlopReport& r : reports) out << to_json(r).dump() << '\n';
  } else {
    out << render_table(reports);
  }
  return kExitOk;
}

struct GenArgs {
  std::int64_t n = 10;
  std::int64_t classes = 3;
  std::int64_t size = 64;
  std::int64_t seed = 0;
  std::string out = "data";
};

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  if (a.n < 0) throw UsageError("--n must be non-negative");
  if (a.size < 1) throw UsageError("--size must be positive");
  SceneParams p;
  p.height = p.width = a.size;
  p.num_classes = a.classes;
  p.validate();
  const Dataset data = generate_dataset(a.n, p, static_cast<std::uint64_t>(a.seed));
  write_dataset(a.out, data);
  out << "wrote " << data.size() << " scenes to " << a.out << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"efaseg: embedding-free attention segmentation toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("efaseg 0.1.0 (kernels: ") + std::string(kernels::isa_name(kernels::active().isa)) + ")");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a run config");
  train_cmd->add_option("config", ta.config, "Run config file")->required();
  train_cmd->add_option("--seed", ta.seed, "Seed for init and sampling (-1: config value)");
  train_cmd->add_option("--out", ta.out, "Checkpoint path; the loss curve goes to <out>.loss.tsv");
  train_cmd->add_option("--steps", ta.steps, "Total optimizer steps (-1: config value)");
  train_cmd->add_option("--init", ta.init, "Start from this checkpoint's weights (fine-tuning)");

  std::string ckpt, data_dir, schedule, schedules, report;
  bool json = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint at a reduction schedule");
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--data", data_dir, "Dataset directory (empty: regenerate the held-out set)");
  eval_cmd->add_option("--schedule", schedule, "Effective ratios \"[e1,e2,e3,e4]-[d1,d2,d3]\" (empty: the config's inference schedule)");
  eval_cmd->add_flag("--json", json, "Print one JSON record instead of the table");

  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a list of inference schedules");
  sweep_cmd->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  sweep_cmd->add_option("--schedules", schedules, "Schedule file, one ratio string per line (empty: 20-row grid)");
  sweep_cmd->add_option("--data", data_dir, "Dataset directory (empty: regenerate the held-out set)");
  sweep_cmd->add_option("--report", report, "Write <report>.jsonl and <report>.txt");

  FlopArgs fa;
  auto* flops_cmd = app.add_subcommand("analyze-flops", "Attention cost breakdown");
  flops_cmd->add_option("--hw", fa.hw, "Token count h*w");
  flops_cmd->add_option("--c", fa.c, "Channels");
  flops_cmd->add_option("--r", fa.r, "Training reduction ratio");
  flops_cmd->add_option("--a", fa.a, "Inference multiplier");
  flops_cmd->add_option("--variant", fa.variant, "embedding_free or embedded");
  flops_cmd->add_flag("--sr-projection", fa.sr_projection, "Linear projection after pooling");
  flops_cmd->add_flag("--bias", fa.biased, "Projections carry biases");
  flops_cmd->add_option("--preset", fa.preset, "appendix-b: the three-row component table");
  flops_cmd->add_flag("--json", fa.json, "Print JSON records");

  GenArgs ga;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset");
  gen_cmd->add_option("--n", ga.n, "Scene count");
  gen_cmd->add_option("--classes", ga.classes, "Class count (>= 2)");
  gen_cmd->add_option("--size", ga.size, "Square extent in pixels");
  gen_cmd->add_option("--seed", ga.seed, "Dataset seed");
  gen_cmd->add_option("--out", ga.out, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(ta, out);
    if (*eval_cmd) return cmd_eval(ckpt, data_dir, schedule, json, out);
    if (*sweep_cmd) return cmd_sweep(ckpt, schedules, data_dir, report, out);
    if (*flops_cmd) return cmd_analyze_flops(fa, out);
    if (*gen_cmd) return cmd_gen_data(ga, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace efaseg
