// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

namespace efaseg::kernels {

// Inner-loop primitives used by every dense op. Each primitive has a scalar
// reference implementation and optional SIMD variants; one variant set is
// chosen at first use from the host CPU and stays fixed for the process, so
// repeated runs on the same machine are bitwise reproducible.

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
  Isa isa;
  // sum_i x[i] * y[i]
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y[i] += alpha * x[i]
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // y[i] += a[i] * b[i]
  void (*mul_acc)(std::size_t n, const double* a, const double* b, double* y);
  // y[i] += x[i]
  void (*add)(std::size_t n, const double* x, double* y);
};

const KernelTable& scalar_table();
// Null when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The active table. Honors EFASEG_ISA=scalar to force the reference path.
const KernelTable& active();

std::string_view isa_name(Isa isa);

inline double dot(std::size_t n, const double* x, const double* y) {
  return active().dot(n, x, y);
}
inline void axpy(std::size_t n, double alpha, const double* x, double* y) {
  active().axpy(n, alpha, x, y);
}
inline void mul_acc(std::size_t n, const double* a, const double* b, double* y) {
  active().mul_acc(n, a, b, y);
}
inline void add(std::size_t n, const double* x, double* y) { active().add(n, x, y); }

// C[m,n] += op(A) * op(B), row-major, where op transposes when the flag is
// set. A is m×k (or k×m when trans_a), B is k×n (or n×k when trans_b).
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c);

}  // namespace efaseg::kernels
