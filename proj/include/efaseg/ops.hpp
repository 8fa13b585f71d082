// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "efaseg/tensor.hpp"

namespace efaseg {

// Differentiable op vocabulary. Spatial tensors are channel-last
// [batch, height, width, channels]. Every op throws DimensionError on
// incompatible shapes and NumericError when it would produce NaN/Inf.

// [..., m, k] x [..., k, n] -> [..., m, n]; batch extents broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] · w[in, out] (+ bias[out]).
Tensor linear(const Tensor& x, const Tensor& w);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Elementwise with b either the same shape as a or a trailing suffix of it.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// Exact erf form.
Tensor gelu(const Tensor& x);

// One extent may be -1 and is inferred.
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, const std::vector<int>& perm);
Tensor concat_lastdim(const std::vector<Tensor>& parts);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Max-subtracted softmax over the last axis.
Tensor softmax_lastdim(const Tensor& x);

// Normalizes each last-axis vector to zero mean, unit variance.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor layer_norm(const Tensor& x, double eps);
inline constexpr double kLayerNormEps = 1e-6;

// Pools over r×r blocks in ceil mode: output extent ceil(h/r), edge blocks
// use only their in-bounds members.
Tensor avg_pool2d(const Tensor& x, std::int64_t r);
Tensor max_pool2d(const Tensor& x, std::int64_t r);
// Window of r+1 starting at i·r (stride r, one trailing pad row/column);
// averages in-bounds members. Output extent ceil(h/r).
Tensor overlapped_avg_pool2d(const Tensor& x, std::int64_t r);

// Cross-correlation. kernel is [kh, kw, cin, cout].
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::int64_t stride, std::int64_t pad);
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::int64_t stride,
              std::int64_t pad);
// kernel is [kh, kw, c] with odd extents; stride 1, same padding.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel);
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// Half-pixel-center bilinear resize to a larger (or equal) grid.
Tensor bilinear_upsample(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

// Mean softmax cross-entropy of logits [..., classes] against one label per
// leading position. Labels equal to ignore_index are skipped.
inline constexpr int kIgnoreIndex = 255;
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels,
                     int ignore_index = kIgnoreIndex);

}  // namespace efaseg
