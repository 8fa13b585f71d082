// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "efaseg/kernels.hpp"

using namespace efaseg::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

std::vector<const KernelTable*> simd_tables() {
  std::vector<const KernelTable*> out;
  if (const KernelTable* t = avx2_table()) out.push_back(t);
  if (const KernelTable* t = neon_table()) out.push_back(t);
  return out;
}

}  // namespace

TEST_CASE("scalar table is the reference") {
  CHECK(scalar_table().isa == Isa::kScalar);
  const double x[3] = {1, 2, 3}, y[3] = {4, 5, 6};
  CHECK(scalar_table().dot(3, x, y) == 32.0);
  double acc[3] = {1, 1, 1};
  scalar_table().axpy(3, 2.0, x, acc);
  CHECK(acc[2] == 7.0);
  scalar_table().mul_acc(3, x, y, acc);
  CHECK(acc[0] == 7.0);
  scalar_table().add(3, x, acc);
  CHECK(acc[1] == 17.0);
}

TEST_CASE("simd variants agree with scalar on every tail length") {
  const auto tables = simd_tables();
  MESSAGE("simd variants available: " << tables.size() << ", active " << isa_name(active().isa));
  std::mt19937_64 rng(11);
  for (const KernelTable* t : tables) {
    for (std::size_t n = 0; n <= 67; ++n) {
      const auto x = random_vec(n, rng), y = random_vec(n, rng), base = random_vec(n, rng);
      const double ref = scalar_table().dot(n, x.data(), y.data());
      CHECK(t->dot(n, x.data(), y.data()) == doctest::Approx(ref).epsilon(1e-13).scale(1.0));

      auto a = base, b = base;
      scalar_table().axpy(n, 0.37, x.data(), a.data());
      t->axpy(n, 0.37, x.data(), b.data());
      for (std::size_t i = 0; i < n; ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-14).scale(1.0));

      a = base, b = base;
      scalar_table().mul_acc(n, x.data(), y.data(), a.data());
      t->mul_acc(n, x.data(), y.data(), b.data());
      for (std::size_t i = 0; i < n; ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-14).scale(1.0));

      a = base, b = base;
      scalar_table().add(n, x.data(), a.data());
      t->add(n, x.data(), b.data());
      for (std::size_t i = 0; i < n; ++i) CHECK(b[i] == a[i]);
    }
  }
}

TEST_CASE("gemm matches a naive triple loop for all transpose flags") {
  std::mt19937_64 rng(5);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      const std::size_t m = 7, n = 9, k = 13;
      const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
      std::vector<double> c(m * n, 0.5), ref(m * n, 0.5);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ta ? a[p * m + i] : a[i * k + p];
            const double bv = tb ? b[j * k + p] : b[p * n + j];
            ref[i * n + j] += av * bv;
          }
        }
      }
      gemm(ta, tb, m, n, k, a.data(), b.data(), c.data());
      for (std::size_t i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}
