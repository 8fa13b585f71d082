// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "efaseg/attention.hpp"
#include "efaseg/ops.hpp"

namespace efaseg::testing {

using Mat = std::vector<std::vector<double>>;  // [tokens][channels]

inline Mat tokens(const Tensor& x) {
  const std::int64_t n = x.dim(1) * x.dim(2), c = x.dim(3);
  Mat m(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(c)));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < c; ++j) m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = x.data()[static_cast<std::size_t>(i * c + j)];
  }
  return m;
}

inline Mat project(const Mat& x, const Tensor& w, const Tensor& b) {
  const std::size_t in = static_cast<std::size_t>(w.dim(0)), out = static_cast<std::size_t>(w.dim(1));
  Mat y(x.size(), std::vector<double>(out, 0.0));
  for (std::size_t t = 0; t < x.size(); ++t) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = b.defined() ? b.data()[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) s += x[t][i] * w.data()[i * out + o];
      y[t][o] = s;
    }
  }
  return y;
}

inline Mat pool(const Mat& x, std::int64_t h, std::int64_t w, std::int64_t r, Pooling kind) {
  if (r == 1 && kind != Pooling::kOverlapped) return x;
  const std::int64_t oh = (h + r - 1) / r, ow = (w + r - 1) / r;
  const std::size_t c = x[0].size();
  const std::int64_t span = kind == Pooling::kOverlapped ? r + 1 : r;
  Mat out;
  for (std::int64_t i = 0; i < oh; ++i) {
    for (std::int64_t j = 0; j < ow; ++j) {
      std::vector<double> v(c, kind == Pooling::kMax ? -1e300 : 0.0);
      int n = 0;
      for (std::int64_t y = i * r; y < std::min(h, i * r + span); ++y) {
        for (std::int64_t xx = j * r; xx < std::min(w, j * r + span); ++xx) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double val = x[static_cast<std::size_t>(y * w + xx)][ch];
            v[ch] = kind == Pooling::kMax ? std::max(v[ch], val) : v[ch] + val;
          }
          ++n;
        }
      }
      if (kind != Pooling::kMax) {
        for (double& e : v) e /= n;
      }
      out.push_back(v);
    }
  }
  return out;
}

inline Mat plain_norm(Mat x) {
  for (auto& row : x) {
    double m = 0.0, v = 0.0;
    for (double e : row) m += e / static_cast<double>(row.size());
    for (double e : row) v += (e - m) * (e - m) / static_cast<double>(row.size());
    for (double& e : row) e = (e - m) / std::sqrt(v + kLayerNormEps);
  }
  return x;
}

// Explicit loops over heads, queries and keys.
inline Tensor brute_force(const Tensor& x, const AttentionConfig& cfg, const AttentionWeights& w, std::int64_t r) {
  const std::int64_t h = x.dim(1), wd = x.dim(2), c = cfg.channels;
  const Mat in = tokens(x);
  Mat reduced = pool(in, h, wd, r, r == 1 ? Pooling::kAverage : cfg.pooling);
  if (cfg.sr_projection) reduced = plain_norm(project(reduced, w.w_sr, w.b_sr));
  Mat q = in, k = reduced, v = reduced;
  if (cfg.variant == AttentionVariant::kEmbedded) {
    q = project(in, w.wq, w.bq);
    k = project(reduced, w.wk, w.bk);
    v = project(reduced, w.wv, w.bv);
  }
  const std::int64_t d = c / cfg.heads;
  Mat mixed(in.size(), std::vector<double>(static_cast<std::size_t>(c), 0.0));
  for (std::int64_t head = 0; head < cfg.heads; ++head) {
    for (std::size_t qi = 0; qi < q.size(); ++qi) {
      std::vector<double> logits(k.size());
      double mx = -1e300;
      for (std::size_t ki = 0; ki < k.size(); ++ki) {
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += q[qi][static_cast<std::size_t>(head * d + j)] * k[ki][static_cast<std::size_t>(head * d + j)];
        logits[ki] = s / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, logits[ki]);
      }
      double z = 0.0;
      for (double& l : logits) z += (l = std::exp(l - mx));
      for (std::size_t ki = 0; ki < k.size(); ++ki) {
        for (std::int64_t j = 0; j < d; ++j) {
          mixed[qi][static_cast<std::size_t>(head * d + j)] += logits[ki] / z * v[ki][static_cast<std::size_t>(head * d + j)];
        }
      }
    }
  }
  const Mat out = project(mixed, w.wo, w.bo);
  std::vector<double> flat;
  for (const auto& row : out) flat.insert(flat.end(), row.begin(), row.end());
  return Tensor::from(x.shape(), flat);
}

inline AttentionWeights scaled_init(const AttentionConfig& cfg, std::mt19937_64& rng, double factor) {
  AttentionWeights w = AttentionWeights::init(cfg, rng);
  std::normal_distribution<double> d(0.0, 0.3);
  w.for_each("", [&](const std::string&, Tensor& t) {
    for (double& v : t.mutable_data()) v = v * factor + d(rng);
  });
  return w;
}

}  // namespace efaseg::testing
