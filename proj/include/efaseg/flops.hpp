// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "efaseg/attention.hpp"
#include "efaseg/isr.hpp"
#include "efaseg/model.hpp"

namespace efaseg {

// Analytic cost model. One multiply-accumulate counts as one FLOP. The
// counted work matches what the numerics ops report to mac_counter:
// matmul/conv MACs, one accumulation per pooled member and channel, one
// multiply per layer-norm element. Softmax, bias adds and resampling are free.

struct Cost {
  double macs = 0.0;
  std::int64_t params = 0;

  Cost& operator+=(const Cost& o) {
    macs += o.macs;
    params += o.params;
    return *this;
  }
  bool operator==(const Cost&) const = default;
};

// Attention cost split into the four columns of the component table.
struct FlopReport {
  std::string label;
  Cost qkv_embedding;       // Q/K/V projections (zero when embedding-free)
  Cost global_functioning;  // Q·Kᵀ and Att·V
  Cost output_projection;   // Wo
  Cost others;              // spatial reduction: pooling and its projection

  Cost total() const;
  FlopReport& operator+=(const FlopReport& o);
};

// Closed form over a token count: the reduced key/value set has
// hw / (r·a)² tokens (fractional when the grid does not divide evenly).
// Pooling is average or max.
FlopReport attention_cost(std::int64_t hw, std::int64_t channels, std::int64_t ratio,
                          std::int64_t multiplier, AttentionVariant variant, bool sr_projection,
                          bool bias_free);

// Exact integer counts for an h×w grid under the ceil-mode pooling the
// implementation uses, for every pooling kind.
FlopReport attention_cost_grid(std::int64_t height, std::int64_t width, const AttentionConfig& cfg,
                               std::int64_t ratio, std::int64_t multiplier);

struct StageCost {
  std::string name;  // enc1..enc4, dec1..dec3, head
  FlopReport attention;
  Cost other;        // patch embedding, norms, FFL, fusion head
};

struct ModelCostReport {
  std::vector<StageCost> stages;
  FlopReport attention;  // summed over all attention layers
  Cost other;

  Cost total() const;
  // Σ global functioning: the quadratic attention term the schedule controls.
  double attention_macs() const { return attention.global_functioning.macs; }
};

// Per-image cost of a full forward pass at the phase's effective ratios.
ModelCostReport model_cost(const ModelConfig& cfg, const ReductionSchedule& schedule, Phase phase,
                           std::int64_t height, std::int64_t width);

// The three rows of the attention component table for a stage-3 feature of a
// 224×224 input (14×14 tokens, 128 channels, r = 2): baseline SRA, EFA, and
// EFA with an inference multiplier of 2. Projections carry biases.
std::vector<FlopReport> appendix_b_reports();

// Fixed-width table: MFLOPs to two decimals, parameters in K to one decimal,
// totals annotated with the change relative to the first row.
std::string render_table(const std::vector<FlopReport>& reports);

// Rounds half-up at `decimals` places.
std::string format_fixed(double value, int decimals);

nlohmann::json to_json(const FlopReport& report);

}  // namespace efaseg
