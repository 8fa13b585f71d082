// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "efaseg/init.hpp"
#include "efaseg/tensor.hpp"

namespace efaseg {

enum class AttentionVariant { kEmbeddingFree, kEmbedded };
enum class Pooling { kAverage, kMax, kOverlapped };

std::string_view to_string(AttentionVariant v);
std::string_view to_string(Pooling p);
AttentionVariant parse_variant(std::string_view text);
Pooling parse_pooling(std::string_view text);

struct AttentionConfig {
  std::int64_t channels = 0;
  std::int64_t heads = 1;
  // Key/value reduction ratio used while training.
  std::int64_t train_ratio = 1;
  AttentionVariant variant = AttentionVariant::kEmbeddingFree;
  Pooling pooling = Pooling::kAverage;
  // Linear c→c followed by a parameter-free layer norm on the pooled tokens.
  bool sr_projection = false;
  bool bias_free = true;

  std::int64_t head_dim() const { return channels / heads; }
  // Throws ConfigError unless heads divides channels and train_ratio >= 1.
  void validate() const;
};

using ParamVisitor = std::function<void(const std::string& name, Tensor& param)>;

// Learned tensors of one attention layer. Undefined members are absent: the
// embedding-free variant has no query/key/value projections at all.
struct AttentionWeights {
  Tensor wq, wk, wv;
  Tensor bq, bk, bv;
  Tensor wo, bo;
  Tensor w_sr, b_sr;

  static AttentionWeights init(const AttentionConfig& cfg, Rng& rng);
  // Same layout as init() with every value zero; wo set to the identity when
  // `identity_output` is true.
  static AttentionWeights zeros(const AttentionConfig& cfg, bool identity_output = false);

  void for_each(const std::string& prefix, const ParamVisitor& visit);
  std::int64_t parameter_count() const;
};

// SR(x, r): ceil-mode pooling by `ratio`, then the optional projection.
// Identity when ratio == 1 and no projection is configured.
Tensor spatial_reduce(const Tensor& x, std::int64_t ratio, const AttentionConfig& cfg,
                      const AttentionWeights& w);

// Embedding-free attention: the normalized input is the query, its reduced
// form is both key and value. Output shape equals input shape for every
// ratio.
Tensor efa_forward(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w,
                   std::int64_t effective_ratio);

// Baseline spatial-reduction attention with learned Q/K/V projections.
Tensor embedded_sra_forward(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w,
                            std::int64_t effective_ratio);

// Dispatches on cfg.variant.
Tensor attention_forward(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w,
                         std::int64_t effective_ratio);

// Post-softmax scores [b, heads, h·w, h'·w'].
Tensor attention_map(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w,
                     std::int64_t effective_ratio);

}  // namespace efaseg
