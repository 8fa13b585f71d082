// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "efaseg/attention.hpp"
#include "efaseg/init.hpp"
#include "efaseg/tensor.hpp"

namespace efaseg {

// Overlapping strided convolution that downsamples between encoder stages,
// followed by layer norm over the output channels.
struct PatchEmbedConfig {
  std::int64_t in_channels = 3;
  std::int64_t out_channels = 0;
  std::int64_t kernel = 3;
  std::int64_t stride = 2;
  std::int64_t pad = 1;

  // kernel 7 / stride 4 / pad 3 for the first stage, 3 / 2 / 1 after.
  static PatchEmbedConfig for_stage(int stage, std::int64_t in_channels, std::int64_t out_channels);
  std::int64_t output_extent(std::int64_t input_extent) const;
};

struct PatchEmbedWeights {
  Tensor kernel, bias;
  Tensor ln_gamma, ln_beta;

  static PatchEmbedWeights init(const PatchEmbedConfig& cfg, Rng& rng);
  void for_each(const std::string& prefix, const ParamVisitor& visit);
};

Tensor patch_embed_forward(const Tensor& x, const PatchEmbedConfig& cfg, const PatchEmbedWeights& w);

// linear c→e·c, depthwise 3×3, GELU, linear e·c→c.
struct FflWeights {
  Tensor w1, b1;
  Tensor dw, dw_bias;
  Tensor w2, b2;

  static FflWeights init(std::int64_t channels, std::int64_t expansion, Rng& rng);
  void for_each(const std::string& prefix, const ParamVisitor& visit);
  std::int64_t hidden() const { return w1.dim(1); }
};

Tensor ffl_forward(const Tensor& x, const FflWeights& w);

struct EftBlockConfig {
  AttentionConfig attention;
  std::int64_t expansion = 4;

  std::int64_t channels() const { return attention.channels; }
};

struct EftBlockWeights {
  Tensor ln1_gamma, ln1_beta;
  AttentionWeights attention;
  Tensor ln2_gamma, ln2_beta;
  FflWeights ffl;

  static EftBlockWeights init(const EftBlockConfig& cfg, Rng& rng);
  void for_each(const std::string& prefix, const ParamVisitor& visit);
};

// z = attention(LN(x)) + x;  out = FFL(LN(z)) + z.
Tensor eft_block_forward(const Tensor& x, const EftBlockConfig& cfg, const EftBlockWeights& w,
                         std::int64_t effective_ratio);

}  // namespace efaseg
