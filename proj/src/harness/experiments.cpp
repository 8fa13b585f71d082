// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "efaseg/error.hpp"
#include "efaseg/harness.hpp"
#include "efaseg/parallel.hpp"

namespace efaseg {

double decoder_feature_similarity(const Model& model, const Dataset& data, const ReductionSchedule& a,
                                  const ReductionSchedule& b) {
  if (data.empty()) throw UsageError("cannot compare features on an empty dataset");
  std::vector<double> sums(data.size(), 0.0);
  std::vector<std::int64_t> counts(data.size(), 0);
  parallel_for(data.size(), [&](std::size_t i) {
    NoGradGuard guard;
    const Batch batch = make_batch(data, {i});
    const auto fa = decoder_features(batch.images, model, a, Phase::kInference);
    const auto fb = decoder_features(batch.images, model, b, Phase::kInference);
    for (std::size_t s = 0; s < fa.size(); ++s) {
      const std::int64_t c = fa[s].dim(-1);
      const std::int64_t n = fa[s].numel() / c;
      const auto x = fa[s].data(), y = fb[s].data();
      for (std::int64_t p = 0; p < n; ++p) {
        double dot = 0.0, nx = 0.0, ny = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
          const double u = x[static_cast<std::size_t>(p * c + j)], v = y[static_cast<std::size_t>(p * c + j)];
          dot += u * v;
          nx += u * u;
          ny += v * v;
        }
        const double denom = std::sqrt(nx) * std::sqrt(ny);
        sums[i] += denom > 0.0 ? dot / denom : 1.0;
        ++counts[i];
      }
    }
  });
  double total = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    total += sums[i];
    n += counts[i];
  }
  return total / static_cast<double>(n);
}

namespace {

bool same_architecture(ModelConfig a, ModelConfig b) {
  a.train_ratios = b.train_ratios;
  a.name = b.name;
  return a == b;
}

void sweep_model(const Model& model, const Dataset& data, const std::vector<RatioSet>& ratios,
                 std::vector<IsrSweepPoint>& out) {
  const std::string variant(to_string(model.config.variant));
  const double base = evaluate(model, data, model.config.training_schedule(), Phase::kTrain).miou;
  for (const RatioSet& r : ratios) {
    const ReductionSchedule s = ReductionSchedule::factorize(model.config.train_ratios, r);
    IsrSweepPoint p;
    p.variant = variant;
    p.ratios = format_ratios(r);
    p.miou = evaluate(model, data, s, Phase::kInference).miou;
    p.degradation = p.miou - base;
    out.push_back(p);
  }
}

}  // namespace

IsrReport isr_experiments(const IsrExperimentInputs& inputs, const Dataset& data) {
  if (inputs.trained_low == nullptr || inputs.trained_high == nullptr) {
    throw UsageError("isr experiments need both the default-ratio and the raised-ratio models");
  }
  const Model& low = *inputs.trained_low;
  const Model& high = *inputs.trained_high;
  if (!same_architecture(low.config, high.config)) {
    throw UsageError("the two models differ in more than their training ratios");
  }
  if (high.config.train_ratios != inputs.raised) {
    throw UsageError("the raised-ratio model was trained at " + format_ratios(high.config.train_ratios) +
                     ", expected " + format_ratios(inputs.raised));
  }
  if (inputs.embedded_low != nullptr &&
      (inputs.embedded_low->config.variant != AttentionVariant::kEmbedded ||
       inputs.embedded_low->config.train_ratios != low.config.train_ratios)) {
    throw UsageError("the embedded counterpart must use the embedded variant at the default ratios");
  }

  IsrReport report;
  report.raised_ratios = format_ratios(inputs.raised);
  const ReductionSchedule isr = ReductionSchedule::factorize(low.config.train_ratios, inputs.raised);
  report.low_train_high_infer_miou = evaluate(low, data, isr, Phase::kInference).miou;
  report.high_train_high_infer_miou = evaluate(high, data, high.config.training_schedule(), Phase::kTrain).miou;

  sweep_model(low, data, inputs.sweep, report.sweep);
  if (inputs.embedded_low != nullptr) {
    sweep_model(*inputs.embedded_low, data, inputs.sweep, report.sweep);
    if (!inputs.sweep.empty()) {
      const std::size_t n = inputs.sweep.size();
      report.efa_degrades_less = report.sweep[n - 1].degradation >= report.sweep[2 * n - 1].degradation;
    }
  }

  ReductionSchedule doubled{low.config.train_ratios, {{2, 2, 2, 2}, {2, 2, 2}}};
  report.feature_cosine = decoder_feature_similarity(low, data, low.config.training_schedule(), doubled);
  return report;
}

}  // namespace efaseg
