// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "efaseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "efaseg/error.hpp"
#include "efaseg/kernels.hpp"
#include "efaseg/mac_counter.hpp"

namespace efaseg {

using detail::make_result;
using detail::Node;

namespace {

using std::size_t;
using i64 = std::int64_t;

// Grad buffer of input `i`, or null when that input does not need one.
double* input_grad(Node& self, size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.grad_buffer().data();
}

const double* input_data(const Node& self, size_t i) { return self.inputs[i]->data.data(); }

void require_rank(const Tensor& x, i64 rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

void require_ratio(i64 r, const char* op) {
  if (r < 1) throw ConfigError(std::string(op) + ": reduction ratio must be >= 1, got " + std::to_string(r));
}

i64 ceil_div(i64 a, i64 b) { return (a + b - 1) / b; }

// Broadcast-suffix check shared by add/mul; returns the inner block size.
size_t suffix_block(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool ok = sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  if (!ok) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(sb) + " onto " +
                         shape_str(sa));
  }
  return static_cast<size_t>(b.numel());
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const i64 m = a.dim(-2), k = a.dim(-1), k2 = b.dim(-2), n = b.dim(-1);
  if (k != k2) {
    throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Shape ba(a.shape().begin(), a.shape().end() - 2);
  Shape bb(b.shape().begin(), b.shape().end() - 2);
  const size_t rank = std::max(ba.size(), bb.size());
  Shape batch(rank, 1);
  // Right-aligned broadcasting strides (in units of whole matrices).
  std::vector<i64> stride_a(rank, 0), stride_b(rank, 0);
  {
    i64 sa = 1, sb = 1;
    for (size_t d = 0; d < rank; ++d) {
      const size_t pos = rank - 1 - d;
      const i64 ea = d < ba.size() ? ba[ba.size() - 1 - d] : 1;
      const i64 eb = d < bb.size() ? bb[bb.size() - 1 - d] : 1;
      if (ea != eb && ea != 1 && eb != 1) {
        throw DimensionError("matmul batch extents not broadcastable: " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
      }
      batch[pos] = std::max(ea, eb);
      stride_a[pos] = ea == 1 ? 0 : sa;
      stride_b[pos] = eb == 1 ? 0 : sb;
      sa *= ea;
      sb *= eb;
    }
  }
  const i64 nbatch = shape_numel(batch);
  std::vector<i64> off_a(static_cast<size_t>(nbatch)), off_b(static_cast<size_t>(nbatch));
  for (i64 bi = 0; bi < nbatch; ++bi) {
    i64 rem = bi, oa = 0, ob = 0;
    for (size_t d = rank; d-- > 0;) {
      const i64 idx = rem % batch[d];
      rem /= batch[d];
      oa += idx * stride_a[d];
      ob += idx * stride_b[d];
    }
    off_a[static_cast<size_t>(bi)] = oa;
    off_b[static_cast<size_t>(bi)] = ob;
  }

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(static_cast<size_t>(nbatch * m * n), 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  // b shared across a contiguous batch of a: fold the batch into rows.
  const bool fold = bb.empty() && nbatch == shape_numel(ba);
  if (fold) {
    kernels::gemm(false, false, static_cast<size_t>(nbatch * m), static_cast<size_t>(n),
                  static_cast<size_t>(k), pa, pb, out.data());
  } else {
    for (i64 bi = 0; bi < nbatch; ++bi) {
      kernels::gemm(false, false, static_cast<size_t>(m), static_cast<size_t>(n), static_cast<size_t>(k),
                    pa + off_a[static_cast<size_t>(bi)] * m * k,
                    pb + off_b[static_cast<size_t>(bi)] * k * n, out.data() + bi * m * n);
    }
  }
  mac_counter::add(static_cast<std::uint64_t>(nbatch * m * k * n));

  return make_result(
      "matmul", std::move(out_shape), std::move(out), {a, b},
      [m, k, n, nbatch, fold, off_a = std::move(off_a), off_b = std::move(off_b)](Node& self) {
        const double* g = self.grad.data();
        const double* av = input_data(self, 0);
        const double* bv = input_data(self, 1);
        double* ga = input_grad(self, 0);
        double* gb = input_grad(self, 1);
        const auto M = static_cast<size_t>(m), K = static_cast<size_t>(k), N = static_cast<size_t>(n);
        if (fold) {
          const size_t rows = static_cast<size_t>(nbatch) * M;
          if (ga) kernels::gemm(false, true, rows, K, N, g, bv, ga);
          if (gb) kernels::gemm(true, false, K, N, rows, av, g, gb);
          return;
        }
        for (i64 bi = 0; bi < nbatch; ++bi) {
          const double* gi = g + bi * m * n;
          const i64 oa = off_a[static_cast<size_t>(bi)] * m * k;
          const i64 ob = off_b[static_cast<size_t>(bi)] * k * n;
          if (ga) kernels::gemm(false, true, M, K, N, gi, bv + ob, ga + oa);
          if (gb) kernels::gemm(true, false, K, N, M, av + oa, gi, gb + ob);
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2) throw DimensionError("linear weight must be rank 2, got " + shape_str(w.shape()));
  return matmul(x, w);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return add(linear(x, w), bias);
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const size_t inner = suffix_block(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  const double* pb = b.data().data();
  for (size_t base = 0; base < out.size(); base += inner) kernels::add(inner, pb, out.data() + base);
  return make_result("add", a.shape(), std::move(out), {a, b}, [inner](Node& self) {
    const std::vector<double>& g = self.grad;
    if (double* ga = input_grad(self, 0)) kernels::add(g.size(), g.data(), ga);
    if (double* gb = input_grad(self, 1)) {
      for (size_t base = 0; base < g.size(); base += inner) kernels::add(inner, g.data() + base, gb);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const size_t inner = suffix_block(a, b, "mul");
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  std::vector<double> out(static_cast<size_t>(a.numel()));
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i % inner];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [inner](Node& self) {
    const std::vector<double>& g = self.grad;
    const double* av = input_data(self, 0);
    const double* bv = input_data(self, 1);
    if (double* ga = input_grad(self, 0)) {
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i % inner];
    }
    if (double* gb = input_grad(self, 1)) {
      for (size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return make_result("scale", x.shape(), std::move(out), {x}, [factor](Node& self) {
    if (double* gx = input_grad(self, 0)) kernels::axpy(self.grad.size(), factor, self.grad.data(), gx);
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  std::vector<double> out(static_cast<size_t>(x.numel()));
  const double* px = x.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * px[i] * (1.0 + std::erf(px[i] * kInvSqrt2));
  return make_result("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
    double* gx = input_grad(self, 0);
    if (!gx) return;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    const double* px = input_data(self, 0);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double v = px[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

// ---------------------------------------------------------------------------
// layout

Tensor reshape(const Tensor& x, Shape shape) {
  i64 known = 1;
  int inferred = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (inferred >= 0) throw DimensionError("reshape allows one inferred extent");
      inferred = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (inferred >= 0 && known > 0 && x.numel() % known == 0) {
    shape[static_cast<size_t>(inferred)] = x.numel() / known;
  }
  if (shape_numel(shape) != x.numel() || std::any_of(shape.begin(), shape.end(), [](i64 e) { return e < 1; })) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    if (double* gx = input_grad(self, 0)) kernels::add(self.grad.size(), self.grad.data(), gx);
  });
}

Tensor transpose(const Tensor& x, const std::vector<int>& perm) {
  const Shape& in = x.shape();
  const size_t rank = in.size();
  if (perm.size() != rank) throw DimensionError("transpose permutation rank mismatch for " + shape_str(in));
  std::vector<bool> used(rank, false);
  for (int p : perm) {
    if (p < 0 || static_cast<size_t>(p) >= rank || used[static_cast<size_t>(p)]) {
      throw DimensionError("invalid transpose permutation for " + shape_str(in));
    }
    used[static_cast<size_t>(p)] = true;
  }
  std::vector<i64> in_stride(rank, 1);
  for (size_t d = rank - 1; d-- > 0;) in_stride[d] = in_stride[d + 1] * in[d + 1];
  Shape out_shape(rank);
  std::vector<i64> src_stride(rank);
  for (size_t d = 0; d < rank; ++d) {
    out_shape[d] = in[static_cast<size_t>(perm[d])];
    src_stride[d] = in_stride[static_cast<size_t>(perm[d])];
  }
  // Source index of every destination element; reused by backward.
  const auto total = static_cast<size_t>(x.numel());
  std::vector<size_t> src(total);
  std::vector<i64> idx(rank, 0);
  i64 offset = 0;
  for (size_t i = 0; i < total; ++i) {
    src[i] = static_cast<size_t>(offset);
    for (size_t d = rank; d-- > 0;) {
      ++idx[d];
      offset += src_stride[d];
      if (idx[d] < out_shape[d]) break;
      offset -= src_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  std::vector<double> out(total);
  const double* px = x.data().data();
  for (size_t i = 0; i < total; ++i) out[i] = px[src[i]];
  return make_result("transpose", std::move(out_shape), std::move(out), {x},
                     [src = std::move(src)](Node& self) {
                       double* gx = input_grad(self, 0);
                       if (!gx) return;
                       for (size_t i = 0; i < src.size(); ++i) gx[src[i]] += self.grad[i];
                     });
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_lastdim of zero tensors");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<size_t> widths;
  size_t total_width = 0;
  for (const Tensor& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead) {
      throw DimensionError("concat_lastdim leading extents differ: " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    widths.push_back(static_cast<size_t>(p.dim(-1)));
    total_width += widths.back();
  }
  const auto rows = static_cast<size_t>(shape_numel(lead));
  std::vector<double> out(rows * total_width);
  size_t col = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].data().data();
    for (size_t r = 0; r < rows; ++r) {
      std::copy_n(src + r * widths[p], widths[p], out.data() + r * total_width + col);
    }
    col += widths[p];
  }
  Shape out_shape = lead;
  out_shape.push_back(static_cast<i64>(total_width));
  return make_result("concat_lastdim", std::move(out_shape), std::move(out), parts,
                     [widths, rows, total_width](Node& self) {
                       size_t c = 0;
                       for (size_t p = 0; p < widths.size(); ++p) {
                         if (double* gp = input_grad(self, p)) {
                           for (size_t r = 0; r < rows; ++r) {
                             kernels::add(widths[p], self.grad.data() + r * total_width + c,
                                          gp + r * widths[p]);
                           }
                         }
                         c += widths[p];
                       }
                     });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result("sum", {1}, {acc}, {x}, [](Node& self) {
    double* gx = input_grad(self, 0);
    if (!gx) return;
    const double g = self.grad[0];
    const size_t n = self.inputs[0]->data.size();
    for (size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor softmax_lastdim(const Tensor& x) {
  const auto width = static_cast<size_t>(x.dim(-1));
  const auto rows = static_cast<size_t>(x.numel()) / width;
  const double* px = x.data().data();
  std::vector<double> out(rows * width);
  for (size_t r = 0; r < rows; ++r) {
    const double* row = px + r * width;
    double* o = out.data() + r * width;
    const double mx = *std::max_element(row, row + width);
    double denom = 0.0;
    for (size_t j = 0; j < width; ++j) {
      o[j] = std::exp(row[j] - mx);
      denom += o[j];
    }
    const double inv = 1.0 / denom;
    for (size_t j = 0; j < width; ++j) o[j] *= inv;
  }
  return make_result("softmax_lastdim", x.shape(), std::move(out), {x}, [rows, width](Node& self) {
    double* gx = input_grad(self, 0);
    if (!gx) return;
    for (size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * width;
      const double* g = self.grad.data() + r * width;
      const double inner = kernels::dot(width, y, g);
      for (size_t j = 0; j < width; ++j) gx[r * width + j] += y[j] * (g[j] - inner);
    }
  });
}

// ---------------------------------------------------------------------------
// layer norm

namespace {

Tensor layer_norm_impl(const Tensor& x, const Tensor* gamma, const Tensor* beta, double eps) {
  if (eps <= 0.0) throw ConfigError("layer_norm eps must be positive");
  const auto c = static_cast<size_t>(x.dim(-1));
  if (gamma && (gamma->rank() != 1 || gamma->dim(0) != x.dim(-1))) {
    throw DimensionError("layer_norm gamma " + shape_str(gamma->shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  if (beta && (beta->rank() != 1 || beta->dim(0) != x.dim(-1))) {
    throw DimensionError("layer_norm beta " + shape_str(beta->shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  const auto rows = static_cast<size_t>(x.numel()) / c;
  const double* px = x.data().data();
  // Normalized values and per-row inverse std are kept for backward.
  std::vector<double> xhat(rows * c);
  std::vector<double> inv_std(rows);
  for (size_t r = 0; r < rows; ++r) {
    const double* row = px + r * c;
    double mu = 0.0;
    for (size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (size_t j = 0; j < c; ++j) xhat[r * c + j] = (row[j] - mu) * is;
  }
  mac_counter::add(static_cast<std::uint64_t>(rows * c));
  std::vector<double> out = xhat;
  std::vector<Tensor> inputs{x};
  if (gamma) {
    const double* pg = gamma->data().data();
    const double* pbeta = beta->data().data();
    for (size_t r = 0; r < rows; ++r) {
      for (size_t j = 0; j < c; ++j) out[r * c + j] = out[r * c + j] * pg[j] + pbeta[j];
    }
    inputs.push_back(*gamma);
    inputs.push_back(*beta);
  }
  const bool affine = gamma != nullptr;
  return make_result(
      "layer_norm", x.shape(), std::move(out), std::move(inputs),
      [rows, c, affine, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const double* g = self.grad.data();
        const double* pg = affine ? input_data(self, 1) : nullptr;
        double* gx = input_grad(self, 0);
        double* ggamma = affine ? input_grad(self, 1) : nullptr;
        double* gbeta = affine ? input_grad(self, 2) : nullptr;
        std::vector<double> gxhat(c);
        const double inv_c = 1.0 / static_cast<double>(c);
        for (size_t r = 0; r < rows; ++r) {
          const double* xh = xhat.data() + r * c;
          const double* gr = g + r * c;
          for (size_t j = 0; j < c; ++j) {
            gxhat[j] = affine ? gr[j] * pg[j] : gr[j];
            if (ggamma) ggamma[j] += gr[j] * xh[j];
            if (gbeta) gbeta[j] += gr[j];
          }
          if (!gx) continue;
          double mean_g = 0.0, mean_gx = 0.0;
          for (size_t j = 0; j < c; ++j) {
            mean_g += gxhat[j];
            mean_gx += gxhat[j] * xh[j];
          }
          mean_g *= inv_c;
          mean_gx *= inv_c;
          for (size_t j = 0; j < c; ++j) {
            gx[r * c + j] += inv_std[r] * (gxhat[j] - mean_g - xh[j] * mean_gx);
          }
        }
      });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  return layer_norm_impl(x, &gamma, &beta, eps);
}

Tensor layer_norm(const Tensor& x, double eps) { return layer_norm_impl(x, nullptr, nullptr, eps); }

// ---------------------------------------------------------------------------
// pooling

namespace {

struct Window {
  i64 begin;
  i64 end;  // exclusive, clipped to the input
};

// Per-axis windows of a pooling layout.
std::vector<Window> pool_windows(i64 extent, i64 r, i64 kernel) {
  std::vector<Window> w(static_cast<size_t>(ceil_div(extent, r)));
  for (size_t i = 0; i < w.size(); ++i) {
    const i64 b = static_cast<i64>(i) * r;
    w[i] = {b, std::min(extent, b + kernel)};
  }
  return w;
}

// Mean pooling over arbitrary per-axis windows (shared by the plain and
// overlapped variants).
Tensor mean_pool(const Tensor& x, i64 r, i64 kernel, const char* op) {
  require_rank(x, 4, op);
  require_ratio(r, op);
  const i64 b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  auto wy = pool_windows(h, r, kernel);
  auto wx = pool_windows(w, r, kernel);
  const auto oh = static_cast<i64>(wy.size()), ow = static_cast<i64>(wx.size());
  const auto C = static_cast<size_t>(c);
  std::vector<double> out(static_cast<size_t>(b * oh * ow * c), 0.0);
  const double* px = x.data().data();
  std::uint64_t members = 0;
  for (i64 n = 0; n < b; ++n) {
    for (i64 oy = 0; oy < oh; ++oy) {
      for (i64 ox = 0; ox < ow; ++ox) {
        double* o = out.data() + ((n * oh + oy) * ow + ox) * c;
        const Window& ry = wy[static_cast<size_t>(oy)];
        const Window& rx = wx[static_cast<size_t>(ox)];
        for (i64 y = ry.begin; y < ry.end; ++y) {
          for (i64 xx = rx.begin; xx < rx.end; ++xx) {
            kernels::add(C, px + ((n * h + y) * w + xx) * c, o);
          }
        }
        const i64 count = (ry.end - ry.begin) * (rx.end - rx.begin);
        members += static_cast<std::uint64_t>(count);
        const double inv = 1.0 / static_cast<double>(count);
        for (size_t j = 0; j < C; ++j) o[j] *= inv;
      }
    }
  }
  mac_counter::add(members * C);
  return make_result(op, {b, oh, ow, c}, std::move(out), {x},
                     [b, h, w, c, oh, ow, wy = std::move(wy), wx = std::move(wx)](Node& self) {
                       double* gx = input_grad(self, 0);
                       if (!gx) return;
                       const auto C = static_cast<size_t>(c);
                       for (i64 n = 0; n < b; ++n) {
                         for (i64 oy = 0; oy < oh; ++oy) {
                           for (i64 ox = 0; ox < ow; ++ox) {
                             const Window& ry = wy[static_cast<size_t>(oy)];
                             const Window& rx = wx[static_cast<size_t>(ox)];
                             const double inv =
                                 1.0 / static_cast<double>((ry.end - ry.begin) * (rx.end - rx.begin));
                             const double* g = self.grad.data() + ((n * oh + oy) * ow + ox) * c;
                             for (i64 y = ry.begin; y < ry.end; ++y) {
                               for (i64 xx = rx.begin; xx < rx.end; ++xx) {
                                 kernels::axpy(C, inv, g, gx + ((n * h + y) * w + xx) * c);
                               }
                             }
                           }
                         }
                       }
                     });
}

}  // namespace

Tensor avg_pool2d(const Tensor& x, i64 r) { return mean_pool(x, r, r, "avg_pool2d"); }

Tensor overlapped_avg_pool2d(const Tensor& x, i64 r) {
  require_ratio(r, "overlapped_avg_pool2d");
  return mean_pool(x, r, r + 1, "overlapped_avg_pool2d");
}

Tensor max_pool2d(const Tensor& x, i64 r) {
  require_rank(x, 4, "max_pool2d");
  require_ratio(r, "max_pool2d");
  const i64 b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const i64 oh = ceil_div(h, r), ow = ceil_div(w, r);
  const double* px = x.data().data();
  std::vector<double> out(static_cast<size_t>(b * oh * ow * c));
  // Flat input index of the winning member per output element (first
  // maximum in scan order).
  std::vector<size_t> argmax(out.size());
  for (i64 n = 0; n < b; ++n) {
    for (i64 oy = 0; oy < oh; ++oy) {
      for (i64 ox = 0; ox < ow; ++ox) {
        const i64 obase = ((n * oh + oy) * ow + ox) * c;
        for (i64 j = 0; j < c; ++j) {
          double best = -std::numeric_limits<double>::infinity();
          size_t best_idx = 0;
          for (i64 y = oy * r; y < std::min(h, oy * r + r); ++y) {
            for (i64 xx = ox * r; xx < std::min(w, ox * r + r); ++xx) {
              const auto idx = static_cast<size_t>(((n * h + y) * w + xx) * c + j);
              if (px[idx] > best) {
                best = px[idx];
                best_idx = idx;
              }
            }
          }
          out[static_cast<size_t>(obase + j)] = best;
          argmax[static_cast<size_t>(obase + j)] = best_idx;
        }
      }
    }
  }
  mac_counter::add(static_cast<std::uint64_t>(x.numel()));
  return make_result("max_pool2d", {b, oh, ow, c}, std::move(out), {x},
                     [argmax = std::move(argmax)](Node& self) {
                       double* gx = input_grad(self, 0);
                       if (!gx) return;
                       for (size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += self.grad[i];
                     });
}

// ---------------------------------------------------------------------------
// convolution

Tensor conv2d(const Tensor& x, const Tensor& kernel, i64 stride, i64 pad) {
  require_rank(x, 4, "conv2d");
  require_rank(kernel, 4, "conv2d kernel");
  if (stride < 1 || pad < 0) throw ConfigError("conv2d: stride must be >= 1 and pad >= 0");
  const i64 b = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const i64 kh = kernel.dim(0), kw = kernel.dim(1), kcin = kernel.dim(2), cout = kernel.dim(3);
  if (kcin != cin) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(x.shape()) + ", kernel " +
                         shape_str(kernel.shape()));
  }
  if (kh > h + 2 * pad || kw > w + 2 * pad) {
    throw ConfigError("conv2d kernel " + shape_str(kernel.shape()) + " exceeds padded input " +
                      shape_str(x.shape()));
  }
  const i64 oh = (h + 2 * pad - kh) / stride + 1;
  const i64 ow = (w + 2 * pad - kw) / stride + 1;
  const auto CO = static_cast<size_t>(cout);
  const double* px = x.data().data();
  const double* pk = kernel.data().data();
  std::vector<double> out(static_cast<size_t>(b * oh * ow * cout), 0.0);
  for (i64 n = 0; n < b; ++n) {
    for (i64 oy = 0; oy < oh; ++oy) {
      for (i64 ox = 0; ox < ow; ++ox) {
        double* o = out.data() + ((n * oh + oy) * ow + ox) * cout;
        for (i64 ky = 0; ky < kh; ++ky) {
          const i64 y = oy * stride - pad + ky;
          if (y < 0 || y >= h) continue;
          for (i64 kx = 0; kx < kw; ++kx) {
            const i64 xx = ox * stride - pad + kx;
            if (xx < 0 || xx >= w) continue;
            const double* xin = px + ((n * h + y) * w + xx) * cin;
            const double* krow = pk + (ky * kw + kx) * cin * cout;
            for (i64 ci = 0; ci < cin; ++ci) kernels::axpy(CO, xin[ci], krow + ci * cout, o);
          }
        }
      }
    }
  }
  mac_counter::add(static_cast<std::uint64_t>(b * oh * ow * kh * kw * cin * cout));
  return make_result(
      "conv2d", {b, oh, ow, cout}, std::move(out), {x, kernel},
      [=](Node& self) {
        const double* xv = input_data(self, 0);
        const double* kv = input_data(self, 1);
        double* gx = input_grad(self, 0);
        double* gk = input_grad(self, 1);
        const auto CO2 = static_cast<size_t>(cout);
        for (i64 n = 0; n < b; ++n) {
          for (i64 oy = 0; oy < oh; ++oy) {
            for (i64 ox = 0; ox < ow; ++ox) {
              const double* g = self.grad.data() + ((n * oh + oy) * ow + ox) * cout;
              for (i64 ky = 0; ky < kh; ++ky) {
                const i64 y = oy * stride - pad + ky;
                if (y < 0 || y >= h) continue;
                for (i64 kx = 0; kx < kw; ++kx) {
                  const i64 xx = ox * stride - pad + kx;
                  if (xx < 0 || xx >= w) continue;
                  const i64 xoff = ((n * h + y) * w + xx) * cin;
                  const i64 koff = (ky * kw + kx) * cin * cout;
                  for (i64 ci = 0; ci < cin; ++ci) {
                    if (gx) gx[xoff + ci] += kernels::dot(CO2, kv + koff + ci * cout, g);
                    if (gk) kernels::axpy(CO2, xv[xoff + ci], g, gk + koff + ci * cout);
                  }
                }
              }
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, i64 stride, i64 pad) {
  return add(conv2d(x, kernel, stride, pad), bias);
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel) {
  require_rank(x, 4, "depthwise_conv2d");
  require_rank(kernel, 3, "depthwise_conv2d kernel");
  const i64 b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const i64 kh = kernel.dim(0), kw = kernel.dim(1);
  if (kernel.dim(2) != c) {
    throw DimensionError("depthwise_conv2d channel mismatch: input " + shape_str(x.shape()) +
                         ", kernel " + shape_str(kernel.shape()));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("depthwise_conv2d needs odd kernel extents");
  const i64 ph = kh / 2, pw = kw / 2;
  const auto C = static_cast<size_t>(c);
  const double* px = x.data().data();
  const double* pk = kernel.data().data();
  std::vector<double> out(static_cast<size_t>(x.numel()), 0.0);
  for (i64 n = 0; n < b; ++n) {
    for (i64 oy = 0; oy < h; ++oy) {
      for (i64 ox = 0; ox < w; ++ox) {
        double* o = out.data() + ((n * h + oy) * w + ox) * c;
        for (i64 ky = 0; ky < kh; ++ky) {
          const i64 y = oy - ph + ky;
          if (y < 0 || y >= h) continue;
          for (i64 kx = 0; kx < kw; ++kx) {
            const i64 xx = ox - pw + kx;
            if (xx < 0 || xx >= w) continue;
            kernels::mul_acc(C, px + ((n * h + y) * w + xx) * c, pk + (ky * kw + kx) * c, o);
          }
        }
      }
    }
  }
  mac_counter::add(static_cast<std::uint64_t>(b * h * w * kh * kw * c));
  return make_result("depthwise_conv2d", x.shape(), std::move(out), {x, kernel}, [=](Node& self) {
    const double* xv = input_data(self, 0);
    const double* kv = input_data(self, 1);
    double* gx = input_grad(self, 0);
    double* gk = input_grad(self, 1);
    const auto C2 = static_cast<size_t>(c);
    for (i64 n = 0; n < b; ++n) {
      for (i64 oy = 0; oy < h; ++oy) {
        for (i64 ox = 0; ox < w; ++ox) {
          const double* g = self.grad.data() + ((n * h + oy) * w + ox) * c;
          for (i64 ky = 0; ky < kh; ++ky) {
            const i64 y = oy - ph + ky;
            if (y < 0 || y >= h) continue;
            for (i64 kx = 0; kx < kw; ++kx) {
              const i64 xx = ox - pw + kx;
              if (xx < 0 || xx >= w) continue;
              const i64 xoff = ((n * h + y) * w + xx) * c;
              const i64 koff = (ky * kw + kx) * c;
              if (gx) kernels::mul_acc(C2, g, kv + koff, gx + xoff);
              if (gk) kernels::mul_acc(C2, g, xv + xoff, gk + koff);
            }
          }
        }
      }
    }
  });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  return add(depthwise_conv2d(x, kernel), bias);
}

// ---------------------------------------------------------------------------
// resampling

namespace {

struct Tap {
  i64 lo;
  i64 hi;
  double frac;  // weight of hi
};

std::vector<Tap> bilinear_taps(i64 in, i64 out) {
  std::vector<Tap> taps(static_cast<size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (i64 i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<i64>(std::floor(src));
    const i64 hi = std::min(lo + 1, in - 1);
    taps[static_cast<size_t>(i)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Tensor bilinear_upsample(const Tensor& x, i64 out_h, i64 out_w) {
  require_rank(x, 4, "bilinear_upsample");
  const i64 b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (out_h < h || out_w < w) {
    throw ConfigError("bilinear_upsample cannot downscale " + shape_str(x.shape()) + " to " +
                      std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  auto ty = bilinear_taps(h, out_h);
  auto tx = bilinear_taps(w, out_w);
  const auto C = static_cast<size_t>(c);
  const double* px = x.data().data();
  std::vector<double> out(static_cast<size_t>(b * out_h * out_w * c), 0.0);
  for (i64 n = 0; n < b; ++n) {
    for (i64 oy = 0; oy < out_h; ++oy) {
      const Tap& yy = ty[static_cast<size_t>(oy)];
      for (i64 ox = 0; ox < out_w; ++ox) {
        const Tap& xx = tx[static_cast<size_t>(ox)];
        double* o = out.data() + ((n * out_h + oy) * out_w + ox) * c;
        const double w00 = (1 - yy.frac) * (1 - xx.frac), w01 = (1 - yy.frac) * xx.frac;
        const double w10 = yy.frac * (1 - xx.frac), w11 = yy.frac * xx.frac;
        kernels::axpy(C, w00, px + ((n * h + yy.lo) * w + xx.lo) * c, o);
        kernels::axpy(C, w01, px + ((n * h + yy.lo) * w + xx.hi) * c, o);
        kernels::axpy(C, w10, px + ((n * h + yy.hi) * w + xx.lo) * c, o);
        kernels::axpy(C, w11, px + ((n * h + yy.hi) * w + xx.hi) * c, o);
      }
    }
  }
  return make_result("bilinear_upsample", {b, out_h, out_w, c}, std::move(out), {x},
                     [=, ty = std::move(ty), tx = std::move(tx)](Node& self) {
                       double* gx = input_grad(self, 0);
                       if (!gx) return;
                       const auto C2 = static_cast<size_t>(c);
                       for (i64 n = 0; n < b; ++n) {
                         for (i64 oy = 0; oy < out_h; ++oy) {
                           const Tap& yy = ty[static_cast<size_t>(oy)];
                           for (i64 ox = 0; ox < out_w; ++ox) {
                             const Tap& xx = tx[static_cast<size_t>(ox)];
                             const double* g = self.grad.data() + ((n * out_h + oy) * out_w + ox) * c;
                             kernels::axpy(C2, (1 - yy.frac) * (1 - xx.frac), g, gx + ((n * h + yy.lo) * w + xx.lo) * c);
                             kernels::axpy(C2, (1 - yy.frac) * xx.frac, g, gx + ((n * h + yy.lo) * w + xx.hi) * c);
                             kernels::axpy(C2, yy.frac * (1 - xx.frac), g, gx + ((n * h + yy.hi) * w + xx.lo) * c);
                             kernels::axpy(C2, yy.frac * xx.frac, g, gx + ((n * h + yy.hi) * w + xx.hi) * c);
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// loss

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, int ignore_index) {
  const auto classes = static_cast<size_t>(logits.dim(-1));
  const size_t rows = static_cast<size_t>(logits.numel()) / classes;
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  }
  const double* pl = logits.data().data();
  // Softmax probabilities are kept for backward.
  std::vector<double> prob(rows * classes);
  std::vector<int> target(labels.begin(), labels.end());
  double total = 0.0;
  size_t counted = 0;
  for (size_t r = 0; r < rows; ++r) {
    const int t = target[r];
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<size_t>(t) >= classes) {
      throw DimensionError("cross_entropy: label " + std::to_string(t) + " outside [0, " +
                           std::to_string(classes) + ")");
    }
    const double* row = pl + r * classes;
    double* p = prob.data() + r * classes;
    const double mx = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (size_t j = 0; j < classes; ++j) {
      p[j] = std::exp(row[j] - mx);
      denom += p[j];
    }
    for (size_t j = 0; j < classes; ++j) p[j] /= denom;
    total += -(row[static_cast<size_t>(t)] - mx - std::log(denom));
    ++counted;
  }
  const double norm = counted ? 1.0 / static_cast<double>(counted) : 0.0;
  return make_result("cross_entropy", {1}, {total * norm}, {logits},
                     [=, prob = std::move(prob), target = std::move(target)](Node& self) {
                       double* gl = input_grad(self, 0);
                       if (!gl) return;
                       const double g = self.grad[0] * norm;
                       for (size_t r = 0; r < rows; ++r) {
                         const int t = target[r];
                         if (t == ignore_index) continue;
                         for (size_t j = 0; j < classes; ++j) {
                           const double ind = static_cast<size_t>(t) == j ? 1.0 : 0.0;
                           gl[r * classes + j] += g * (prob[r * classes + j] - ind);
                         }
                       }
                     });
}

}  // namespace efaseg
