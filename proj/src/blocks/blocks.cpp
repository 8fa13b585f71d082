// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "efaseg/blocks.hpp"

#include <cmath>

#include "efaseg/error.hpp"
#include "efaseg/ops.hpp"

namespace efaseg {

PatchEmbedConfig PatchEmbedConfig::for_stage(int stage, std::int64_t in_channels,
                                             std::int64_t out_channels) {
  if (stage == 1) return {in_channels, out_channels, 7, 4, 3};
  return {in_channels, out_channels, 3, 2, 1};
}

std::int64_t PatchEmbedConfig::output_extent(std::int64_t input_extent) const {
  return (input_extent + 2 * pad - kernel) / stride + 1;
}

PatchEmbedWeights PatchEmbedWeights::init(const PatchEmbedConfig& cfg, Rng& rng) {
  // He-style fan-out scaling.
  const double fan_out = static_cast<double>(cfg.kernel * cfg.kernel * cfg.out_channels);
  PatchEmbedWeights w;
  w.kernel = normal_param({cfg.kernel, cfg.kernel, cfg.in_channels, cfg.out_channels},
                          std::sqrt(2.0 / fan_out), rng);
  w.bias = zeros_param({cfg.out_channels});
  w.ln_gamma = ones_param({cfg.out_channels});
  w.ln_beta = zeros_param({cfg.out_channels});
  return w;
}

void PatchEmbedWeights::for_each(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "kernel", kernel);
  visit(prefix + "bias", bias);
  visit(prefix + "ln.gamma", ln_gamma);
  visit(prefix + "ln.beta", ln_beta);
}

Tensor patch_embed_forward(const Tensor& x, const PatchEmbedConfig& cfg, const PatchEmbedWeights& w) {
  if (x.rank() != 4) throw DimensionError("patch embedding expects [b,h,w,c], got " + shape_str(x.shape()));
  if (x.dim(1) + 2 * cfg.pad < cfg.kernel || x.dim(2) + 2 * cfg.pad < cfg.kernel) {
    throw ConfigError("input " + shape_str(x.shape()) + " smaller than patch kernel " +
                      std::to_string(cfg.kernel));
  }
  Tensor y = conv2d(x, w.kernel, w.bias, cfg.stride, cfg.pad);
  return layer_norm(y, w.ln_gamma, w.ln_beta, kLayerNormEps);
}

FflWeights FflWeights::init(std::int64_t channels, std::int64_t expansion, Rng& rng) {
  if (channels < 1 || expansion < 1) throw ConfigError("FFL channels and expansion must be positive");
  const std::int64_t hidden = channels * expansion;
  FflWeights w;
  w.w1 = normal_param({channels, hidden}, 0.02, rng);
  w.b1 = zeros_param({hidden});
  w.dw = normal_param({3, 3, hidden}, std::sqrt(2.0 / 9.0), rng);
  w.dw_bias = zeros_param({hidden});
  w.w2 = normal_param({hidden, channels}, 0.02, rng);
  w.b2 = zeros_param({channels});
  return w;
}

void FflWeights::for_each(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "w1", w1);
  visit(prefix + "b1", b1);
  visit(prefix + "dw", dw);
  visit(prefix + "dw_bias", dw_bias);
  visit(prefix + "w2", w2);
  visit(prefix + "b2", b2);
}

Tensor ffl_forward(const Tensor& x, const FflWeights& w) {
  if (x.rank() != 4 || x.dim(3) != w.w1.dim(0)) {
    throw DimensionError("FFL input " + shape_str(x.shape()) + " does not match weights " +
                         shape_str(w.w1.shape()));
  }
  Tensor hidden = linear(x, w.w1, w.b1);
  hidden = gelu(depthwise_conv2d(hidden, w.dw, w.dw_bias));
  return linear(hidden, w.w2, w.b2);
}

EftBlockWeights EftBlockWeights::init(const EftBlockConfig& cfg, Rng& rng) {
  const std::int64_t c = cfg.channels();
  EftBlockWeights w;
  w.ln1_gamma = ones_param({c});
  w.ln1_beta = zeros_param({c});
  w.attention = AttentionWeights::init(cfg.attention, rng);
  w.ln2_gamma = ones_param({c});
  w.ln2_beta = zeros_param({c});
  w.ffl = FflWeights::init(c, cfg.expansion, rng);
  return w;
}

void EftBlockWeights::for_each(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "ln1.gamma", ln1_gamma);
  visit(prefix + "ln1.beta", ln1_beta);
  attention.for_each(prefix + "attn.", visit);
  visit(prefix + "ln2.gamma", ln2_gamma);
  visit(prefix + "ln2.beta", ln2_beta);
  ffl.for_each(prefix + "ffl.", visit);
}

Tensor eft_block_forward(const Tensor& x, const EftBlockConfig& cfg, const EftBlockWeights& w,
                         std::int64_t effective_ratio) {
  Tensor normed = layer_norm(x, w.ln1_gamma, w.ln1_beta, kLayerNormEps);
  Tensor z = add(attention_forward(normed, cfg.attention, w.attention, effective_ratio), x);
  Tensor normed2 = layer_norm(z, w.ln2_gamma, w.ln2_beta, kLayerNormEps);
  return add(ffl_forward(normed2, w.ffl), z);
}

}  // namespace efaseg
