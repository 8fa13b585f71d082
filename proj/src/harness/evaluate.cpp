// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "efaseg/error.hpp"
#include "efaseg/harness.hpp"
#include "efaseg/ops.hpp"
#include "efaseg/parallel.hpp"

namespace efaseg {

using Confusion = std::vector<std::vector<std::int64_t>>;

EvalResult metrics_from_confusion(Confusion confusion) {
  const std::size_t k = confusion.size();
  for (const auto& row : confusion) {
    if (row.size() != k) throw DimensionError("confusion matrix must be square");
  }
  EvalResult r;
  std::int64_t correct = 0, total = 0;
  std::vector<std::int64_t> row_sum(k, 0), col_sum(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      row_sum[i] += confusion[i][j];
      col_sum[j] += confusion[i][j];
      total += confusion[i][j];
    }
    correct += confusion[i][i];
  }
  r.pixel_accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  double iou_sum = 0.0;
  int present = 0;
  r.class_iou.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::int64_t tp = confusion[i][i];
    const std::int64_t uni = row_sum[i] + col_sum[i] - tp;
    if (uni == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(uni);
    r.class_iou[i] = iou;
    iou_sum += iou;
    ++present;
  }
  r.miou = present > 0 ? iou_sum / present : 0.0;
  r.confusion = std::move(confusion);
  return r;
}

EvalResult score_predictions(std::span<const int> predictions, std::span<const int> labels,
                             std::int64_t num_classes, int ignore_index) {
  if (predictions.size() != labels.size()) throw DimensionError("prediction and label counts differ");
  if (num_classes < 1) throw ConfigError("class count must be positive");
  const auto k = static_cast<std::size_t>(num_classes);
  Confusion cm(k, std::vector<std::int64_t>(k, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == ignore_index) continue;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k || predictions[i] < 0 ||
        static_cast<std::size_t>(predictions[i]) >= k) {
      throw ConfigError("class id outside [0, " + std::to_string(num_classes) + ")");
    }
    ++cm[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  }
  return metrics_from_confusion(std::move(cm));
}

std::vector<int> predict_labels(const Tensor& logits) {
  const std::int64_t c = logits.dim(-1);
  const std::int64_t n = logits.numel() / c;
  const auto d = logits.data();
  std::vector<int> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = d.data() + i * c;
    int best = 0;
    for (std::int64_t j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = static_cast<int>(j);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

EvalResult evaluate(const Model& model, const Dataset& data, const ReductionSchedule& schedule,
                    Phase phase) {
  if (data.empty()) throw UsageError("cannot evaluate on an empty dataset");
  const auto k = static_cast<std::size_t>(model.config.num_classes);
  std::vector<Confusion> per_sample(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    NoGradGuard guard;
    const Batch b = make_batch(data, {i});
    const Tensor logits = model_forward(b.images, model, schedule, phase);
    per_sample[i] = score_predictions(predict_labels(logits), b.labels, model.config.num_classes).confusion;
  });
  Confusion total(k, std::vector<std::int64_t>(k, 0));
  for (const Confusion& cm : per_sample) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) total[i][j] += cm[i][j];
    }
  }
  return metrics_from_confusion(std::move(total));
}

}  // namespace efaseg
