// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "efaseg/init.hpp"
#include "efaseg/isr.hpp"
#include "efaseg/model.hpp"
#include "efaseg/tensor.hpp"

namespace efaseg {

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SceneParams {
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t num_classes = 3;
  std::int64_t min_shapes = 1;
  std::int64_t max_shapes = 4;
  bool rectangles_only = false;
  double noise = 0.04;

  void validate() const;
};

// Textured class-0 background with rectangles and circles of the other
// classes, each class drawn around its own mean color.
struct SyntheticScene {
  Tensor image;             // [H, W, 3], values in [0, 1]
  std::vector<int> labels;  // H·W class ids, row-major
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::uint64_t seed = 0;

  Tensor label_tensor() const;  // [H, W]
};

using Dataset = std::vector<SyntheticScene>;

SyntheticScene generate_scene(const SceneParams& params, std::uint64_t seed);
// Scene i uses a seed derived from (seed, i); regenerating is pixel-exact.
Dataset generate_dataset(std::int64_t n, const SceneParams& params, std::uint64_t seed);
Dataset generate_dataset(std::int64_t n, std::int64_t height, std::int64_t width,
                         std::int64_t num_classes, std::uint64_t seed);
std::uint64_t scene_seed(std::uint64_t dataset_seed, std::int64_t index);

// One file per scene (image tensor followed by label tensor) plus
// index.tsv listing "seed<TAB>file" per line.
void write_dataset(const std::filesystem::path& dir, const Dataset& scenes);
Dataset read_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::int64_t steps = 2000;
  std::int64_t batch_size = 4;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::int64_t warmup_steps = 50;
  bool hflip = true;
  std::uint64_t seed = 0;
  // Stop before this step when set; the schedule still spans `steps`.
  std::optional<std::int64_t> stop_at;
  // Called after every optimizer step with (step, loss).
  std::function<void(std::int64_t, double)> on_step;
};

// Learning rate at a 0-based step: linear warmup, then linear decay.
double learning_rate(const TrainOptions& options, std::int64_t step);

struct TrainState {
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;   // parameter order of ModelWeights::for_each
  std::vector<Tensor> second_moment;
  Rng rng;
};

struct TrainResult {
  std::vector<double> loss_curve;
  TrainState state;
};

// Trains `model` in place up to options.steps total optimizer steps, with
// pixel-wise cross-entropy on full-resolution logits and AdamW. When
// `resume` is given, continues from its step with its moments and RNG.
// Throws NumericError naming step, learning rate and gradient norm when the
// loss or any activation goes non-finite.
TrainResult train(Model& model, const Dataset& data, const TrainOptions& options,
                  const TrainState* resume = nullptr);

// Stacks scenes into a [n, H, W, 3] batch and concatenated labels.
struct Batch {
  Tensor images;
  std::vector<int> labels;
};
Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                 const std::vector<bool>& flips = {});

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  double pixel_accuracy = 0.0;
  std::vector<std::optional<double>> class_iou;  // nullopt: absent in label and prediction
  double miou = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [label][prediction]
};

EvalResult metrics_from_confusion(std::vector<std::vector<std::int64_t>> confusion);
EvalResult score_predictions(std::span<const int> predictions, std::span<const int> labels,
                             std::int64_t num_classes, int ignore_index = 255);

// Argmax over classes of [b, H, W, C] logits, ties to the lower index.
std::vector<int> predict_labels(const Tensor& logits);

EvalResult evaluate(const Model& model, const Dataset& data, const ReductionSchedule& schedule,
                    Phase phase);

// ---------------------------------------------------------------------------
// Inference-reduction experiments

// Mean per-position cosine similarity between decoder-stage features
// computed at two schedules.
double decoder_feature_similarity(const Model& model, const Dataset& data, const ReductionSchedule& a,
                                  const ReductionSchedule& b);

struct IsrSweepPoint {
  std::string variant;
  std::string ratios;
  double miou = 0.0;
  double degradation = 0.0;  // miou - miou at the training schedule
};

struct IsrReport {
  std::string raised_ratios;
  // Trained at the default ratios, evaluated at the raised ratios.
  double low_train_high_infer_miou = 0.0;
  // Trained and evaluated at the raised ratios.
  double high_train_high_infer_miou = 0.0;
  std::vector<IsrSweepPoint> sweep;
  double feature_cosine = 0.0;
  // Embedding-free degradation at the largest swept ratios is no worse than
  // the embedded variant's. Informational at this scale.
  std::optional<bool> efa_degrades_less;
};

struct IsrExperimentInputs {
  const Model* trained_low = nullptr;       // default training ratios
  const Model* trained_high = nullptr;      // trained at the raised ratios
  const Model* embedded_low = nullptr;      // optional embedded-variant counterpart
  RatioSet raised = {{16, 8, 2, 1}, {2, 4, 8}};
  std::vector<RatioSet> sweep;              // effective ratios, in order
};

IsrReport isr_experiments(const IsrExperimentInputs& inputs, const Dataset& data);

}  // namespace efaseg
