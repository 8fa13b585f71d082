// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "efaseg/attention.hpp"

#include <cmath>

#include "efaseg/error.hpp"
#include "efaseg/ops.hpp"

namespace efaseg {

std::string_view to_string(AttentionVariant v) {
  return v == AttentionVariant::kEmbeddingFree ? "embedding_free" : "embedded";
}

std::string_view to_string(Pooling p) {
  switch (p) {
    case Pooling::kAverage: return "average";
    case Pooling::kMax: return "max";
    case Pooling::kOverlapped: return "overlapped";
  }
  return "average";
}

AttentionVariant parse_variant(std::string_view text) {
  if (text == "embedding_free" || text == "embedding-free" || text == "efa") {
    return AttentionVariant::kEmbeddingFree;
  }
  if (text == "embedded" || text == "sra") return AttentionVariant::kEmbedded;
  throw ConfigError("unknown attention variant '" + std::string(text) + "'");
}

Pooling parse_pooling(std::string_view text) {
  if (text == "average" || text == "avg") return Pooling::kAverage;
  if (text == "max") return Pooling::kMax;
  if (text == "overlapped") return Pooling::kOverlapped;
  throw ConfigError("unknown pooling kind '" + std::string(text) + "'");
}

void AttentionConfig::validate() const {
  if (channels < 1) throw ConfigError("attention channels must be positive");
  if (heads < 1 || channels % heads != 0) {
    throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide channels (" +
                      std::to_string(channels) + ")");
  }
  if (train_ratio < 1) throw ConfigError("attention train ratio must be >= 1");
}

AttentionWeights AttentionWeights::init(const AttentionConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::int64_t c = cfg.channels;
  constexpr double kStd = 0.02;
  AttentionWeights w;
  if (cfg.variant == AttentionVariant::kEmbedded) {
    w.wq = normal_param({c, c}, kStd, rng);
    w.wk = normal_param({c, c}, kStd, rng);
    w.wv = normal_param({c, c}, kStd, rng);
    if (!cfg.bias_free) {
      w.bq = zeros_param({c});
      w.bk = zeros_param({c});
      w.bv = zeros_param({c});
    }
  }
  w.wo = normal_param({c, c}, kStd, rng);
  if (!cfg.bias_free) w.bo = zeros_param({c});
  if (cfg.sr_projection) {
    w.w_sr = normal_param({c, c}, kStd, rng);
    if (!cfg.bias_free) w.b_sr = zeros_param({c});
  }
  return w;
}

AttentionWeights AttentionWeights::zeros(const AttentionConfig& cfg, bool identity_output) {
  Rng unused(0);
  AttentionWeights w = init(cfg, unused);
  w.for_each("", [](const std::string&, Tensor& t) {
    for (double& v : t.mutable_data()) v = 0.0;
  });
  if (identity_output) {
    auto d = w.wo.mutable_data();
    for (std::int64_t i = 0; i < cfg.channels; ++i) d[static_cast<std::size_t>(i * cfg.channels + i)] = 1.0;
  }
  return w;
}

void AttentionWeights::for_each(const std::string& prefix, const ParamVisitor& visit) {
  auto emit = [&](const char* name, Tensor& t) {
    if (t.defined()) visit(prefix + name, t);
  };
  emit("wq", wq);
  emit("bq", bq);
  emit("wk", wk);
  emit("bk", bk);
  emit("wv", wv);
  emit("bv", bv);
  emit("wo", wo);
  emit("bo", bo);
  emit("w_sr", w_sr);
  emit("b_sr", b_sr);
}

std::int64_t AttentionWeights::parameter_count() const {
  std::int64_t n = 0;
  for (const Tensor* t : {&wq, &wk, &wv, &bq, &bk, &bv, &wo, &bo, &w_sr, &b_sr}) {
    if (t->defined()) n += t->numel();
  }
  return n;
}

namespace {

Tensor project(const Tensor& x, const Tensor& w, const Tensor& b) {
  return b.defined() ? linear(x, w, b) : linear(x, w);
}

// [b, h, w, c] -> [b, heads, h·w, d]
Tensor split_heads(const Tensor& x, std::int64_t heads) {
  const std::int64_t b = x.dim(0), n = x.dim(1) * x.dim(2), c = x.dim(3);
  return transpose(reshape(x, {b, n, heads, c / heads}), {0, 2, 1, 3});
}

// Scores of queries `q` against keys `k`, both [b, heads, tokens, d].
Tensor scores(const Tensor& q, const Tensor& k, std::int64_t head_dim) {
  Tensor logits = matmul(q, transpose(k, {0, 1, 3, 2}));
  return softmax_lastdim(scale(logits, 1.0 / std::sqrt(static_cast<double>(head_dim))));
}

struct Qkv {
  Tensor q, k, v;
};

Qkv build_qkv(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w,
              std::int64_t ratio) {
  cfg.validate();
  if (x.rank() != 4 || x.dim(3) != cfg.channels) {
    throw DimensionError("attention input " + shape_str(x.shape()) + " does not match " +
                         std::to_string(cfg.channels) + " channels");
  }
  if (ratio < 1) throw ConfigError("effective reduction ratio must be >= 1");
  Tensor reduced = spatial_reduce(x, ratio, cfg, w);
  if (cfg.variant == AttentionVariant::kEmbeddingFree) {
    Tensor kv = split_heads(reduced, cfg.heads);
    return {split_heads(x, cfg.heads), kv, kv};
  }
  if (!w.wq.defined() || !w.wk.defined() || !w.wv.defined()) {
    throw ConfigError("embedded attention needs query/key/value projections");
  }
  return {split_heads(project(x, w.wq, w.bq), cfg.heads),
          split_heads(project(reduced, w.wk, w.bk), cfg.heads),
          split_heads(project(reduced, w.wv, w.bv), cfg.heads)};
}

Tensor attend(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w,
              std::int64_t ratio) {
  const Qkv qkv = build_qkv(x, cfg, w, ratio);
  Tensor mixed = matmul(scores(qkv.q, qkv.k, cfg.head_dim()), qkv.v);
  Tensor merged = reshape(transpose(mixed, {0, 2, 1, 3}), x.shape());
  return project(merged, w.wo, w.bo);
}

}  // namespace

Tensor spatial_reduce(const Tensor& x, std::int64_t ratio, const AttentionConfig& cfg,
                      const AttentionWeights& w) {
  if (ratio < 1) throw ConfigError("spatial reduction ratio must be >= 1, got " + std::to_string(ratio));
  Tensor pooled = x;
  if (ratio > 1) {
    switch (cfg.pooling) {
      case Pooling::kAverage: pooled = avg_pool2d(x, ratio); break;
      case Pooling::kMax: pooled = max_pool2d(x, ratio); break;
      case Pooling::kOverlapped: pooled = overlapped_avg_pool2d(x, ratio); break;
    }
  }
  if (!cfg.sr_projection) return pooled;
  if (!w.w_sr.defined()) throw ConfigError("sr_projection enabled but no projection weights");
  return layer_norm(project(pooled, w.w_sr, w.b_sr), kLayerNormEps);
}

Tensor efa_forward(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w,
                   std::int64_t effective_ratio) {
  AttentionConfig c = cfg;
  c.variant = AttentionVariant::kEmbeddingFree;
  return attend(x, c, w, effective_ratio);
}

Tensor embedded_sra_forward(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w,
                            std::int64_t effective_ratio) {
  AttentionConfig c = cfg;
  c.variant = AttentionVariant::kEmbedded;
  return attend(x, c, w, effective_ratio);
}

Tensor attention_forward(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w,
                         std::int64_t effective_ratio) {
  return attend(x, cfg, w, effective_ratio);
}

Tensor attention_map(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w,
                     std::int64_t effective_ratio) {
  const Qkv qkv = build_qkv(x, cfg, w, effective_ratio);
  return scores(qkv.q, qkv.k, cfg.head_dim());
}

}  // namespace efaseg
