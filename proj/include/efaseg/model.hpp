// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "efaseg/attention.hpp"
#include "efaseg/blocks.hpp"
#include "efaseg/isr.hpp"
#include "efaseg/tensor.hpp"

namespace efaseg {

// Encoder stage i (1-based) feeds decoder stage j through this table:
// F4 → decoder 1, F3 → decoder 2, F2 → decoder 3. F1 is not decoded.
inline constexpr std::array<int, 3> kDecoderSourceStage{4, 3, 2};

struct ModelConfig {
  std::string name = "nano";
  std::int64_t in_channels = 3;
  std::array<std::int64_t, 4> stage_channels{16, 32, 64, 128};
  std::array<std::int64_t, 4> stage_depths{2, 2, 2, 2};
  std::array<std::int64_t, 4> stage_heads{1, 2, 4, 8};
  std::array<std::int64_t, 3> decoder_depths{3, 2, 1};
  std::int64_t num_classes = 3;
  std::int64_t fusion_channels = 128;
  std::int64_t expansion = 4;
  AttentionVariant variant = AttentionVariant::kEmbeddingFree;
  Pooling pooling = Pooling::kAverage;
  bool sr_projection = false;
  bool bias_free = true;
  // Reduction ratios the weights are (or will be) trained at.
  RatioSet train_ratios = RatioSet::default_training();

  bool operator==(const ModelConfig&) const = default;

  static ModelConfig nano();
  // nano with doubled channel widths.
  static ModelConfig micro();
  // By name: "nano" or "micro".
  static ModelConfig named(const std::string& name);

  void validate() const;
  // Inputs must be at least 32 and a multiple of 32 on both axes.
  void validate_input(std::int64_t height, std::int64_t width) const;

  EftBlockConfig encoder_block(int stage) const;    // stage in 1..4
  EftBlockConfig decoder_block(int dstage) const;   // dstage in 1..3
  PatchEmbedConfig patch_embed(int stage) const;
  // The schedule the model trains with: t = train_ratios, a = 1.
  ReductionSchedule training_schedule() const { return {train_ratios, RatioSet::ones()}; }
};

// Canonical JSON form. Unknown keys are rejected with ConfigError.
nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& doc);

struct EncoderStageWeights {
  PatchEmbedWeights embed;
  std::vector<EftBlockWeights> blocks;
};

struct DecoderStageWeights {
  Tensor ln_gamma, ln_beta;
  std::vector<EftBlockWeights> blocks;
};

struct ModelWeights {
  std::array<EncoderStageWeights, 4> encoder;
  std::array<DecoderStageWeights, 3> decoder;
  Tensor fuse_w, fuse_b;
  Tensor cls_w, cls_b;

  // Visits every defined tensor with a stable dotted name.
  void for_each(const ParamVisitor& visit);
};

struct Model {
  ModelConfig config;
  ModelWeights weights;

  static Model init(const ModelConfig& cfg, std::uint64_t seed);
};

// Number of learned scalars held by `weights`.
std::int64_t count_parameters(ModelWeights& weights);
inline std::int64_t count_parameters(Model& model) { return count_parameters(model.weights); }

using EncoderFeatures = std::array<Tensor, 4>;

// F_i for i = 1..4 at extents H/2^{i+1} × W/2^{i+1}.
EncoderFeatures encoder_forward(const Tensor& image, const Model& model,
                                const std::array<std::int64_t, 4>& ratios);

// Class mask at the F2 resolution (H/8 × W/8).
Tensor decoder_forward(const Tensor& f2, const Tensor& f3, const Tensor& f4, const Model& model,
                       const std::array<std::int64_t, 3>& ratios);

// Per-pixel logits [b, H, W, classes] at the phase's effective ratios.
Tensor model_forward(const Tensor& image, const Model& model, const ReductionSchedule& schedule,
                     Phase phase);

// Decoder stage outputs before upsampling; used for feature-similarity
// checks between schedules.
std::array<Tensor, 3> decoder_features(const Tensor& image, const Model& model,
                                       const ReductionSchedule& schedule, Phase phase);

}  // namespace efaseg
