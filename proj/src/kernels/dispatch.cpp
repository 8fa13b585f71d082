// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <string>

#include "efaseg/kernels.hpp"

namespace efaseg::kernels {
namespace {

const KernelTable& select() {
  if (const char* forced = std::getenv("EFASEG_ISA"); forced && std::string(forced) == "scalar") {
    return scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return *t;
  if (const KernelTable* t = neon_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c) {
  const KernelTable& t = active();
  if (!trans_b) {
    // Row of C accumulates scaled rows of B; contiguous in n.
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        if (av != 0.0) t.axpy(n, av, b + p * n, crow);
      }
    }
    return;
  }
  if (!trans_a) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += t.dot(k, arow, b + j * k);
    }
    return;
  }
  // Both transposed: rare, no vector path.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
      c[i * n + j] += acc;
    }
  }
}

}  // namespace efaseg::kernels
