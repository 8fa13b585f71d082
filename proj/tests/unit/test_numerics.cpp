// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "efaseg/error.hpp"
#include "efaseg/mac_counter.hpp"
#include "efaseg/ops.hpp"

using namespace efaseg;

namespace {

Tensor iota(Shape shape, double start = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  std::iota(v.begin(), v.end(), start);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = d(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

void check_values(const Tensor& t, const std::vector<double>& expect, double tol = 1e-12) {
  REQUIRE(t.numel() == static_cast<std::int64_t>(expect.size()));
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (tol == 0.0) {
      CHECK(t.data()[i] == expect[i]);
    } else {
      CHECK(t.data()[i] == doctest::Approx(expect[i]).epsilon(tol));
    }
  }
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.dim(-1) == 3);
  CHECK(t.at({1, 2}) == 6.0);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::from({0, 2}, {}), DimensionError);
  CHECK_THROWS_AS(Tensor::from({1}, {std::nan("")}), NumericError);
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    Tensor x = random_tensor({2, 3}, 1);
    check_values(matmul(Tensor::from({2, 2}, {1, 0, 0, 1}), x), {x.data().begin(), x.data().end()});
  }
  SUBCASE("hand product") {
    Tensor c = matmul(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 2}, {5, 6, 7, 8}));
    check_values(c, {19, 22, 43, 50});
  }
  SUBCASE("gradient of sum(A·B) wrt A is ones·Bᵀ") {
    Tensor a = random_tensor({3, 4}, 2, true);
    Tensor b = random_tensor({4, 5}, 3);
    backward(sum(matmul(a, b)));
    for (std::int64_t i = 0; i < 3; ++i) {
      for (std::int64_t k = 0; k < 4; ++k) {
        double row = 0.0;
        for (std::int64_t j = 0; j < 5; ++j) row += b.at({k, j});
        CHECK(a.grad()[static_cast<std::size_t>(i * 4 + k)] == doctest::Approx(row).epsilon(1e-12));
      }
    }
  }
  SUBCASE("batch broadcast") {
    Tensor a = random_tensor({2, 3, 4}, 4);
    Tensor b = random_tensor({1, 4, 2}, 5);
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 3, 2});
    double ref = 0.0;
    for (std::int64_t k = 0; k < 4; ++k) ref += a.at({1, 2, k}) * b.at({0, k, 1});
    CHECK(c.at({1, 2, 1}) == doctest::Approx(ref).epsilon(1e-12));
  }
  SUBCASE("mismatch names both shapes") {
    try {
      matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2,3]") != std::string::npos);
      CHECK(msg.find("[4,2]") != std::string::npos);
    }
  }
}

TEST_CASE("softmax") {
  check_values(softmax_lastdim(Tensor::from({3}, {0, 0, 0})), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  check_values(softmax_lastdim(Tensor::from({2}, {1000, 1000})), {0.5, 0.5});
  check_values(softmax_lastdim(Tensor::from({2}, {0, std::log(2.0)})), {1.0 / 3, 2.0 / 3});

  Tensor x = random_tensor({4, 7}, 9);
  Tensor s = softmax_lastdim(x);
  for (std::int64_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::int64_t j = 0; j < 7; ++j) {
      CHECK(s.at({r, j}) >= 0.0);
      total += s.at({r, j});
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  // permutation equivariance
  const std::vector<int> perm{3, 0, 6, 1, 5, 2, 4};
  std::vector<double> permuted;
  for (std::int64_t r = 0; r < 4; ++r) {
    for (int p : perm) permuted.push_back(x.at({r, p}));
  }
  Tensor sp = softmax_lastdim(Tensor::from({4, 7}, permuted));
  for (std::int64_t r = 0; r < 4; ++r) {
    for (std::size_t j = 0; j < perm.size(); ++j) {
      CHECK(sp.at({r, static_cast<std::int64_t>(j)}) == doctest::Approx(s.at({r, perm[j]})).epsilon(1e-14));
    }
  }
}

TEST_CASE("layer norm") {
  Tensor ones = Tensor::full({4}, 1.0), zeros = Tensor::zeros({4});
  check_values(layer_norm(Tensor::full({2, 4}, 3.0), ones, zeros, kLayerNormEps), std::vector<double>(8, 0.0));
  check_values(layer_norm(random_tensor({2, 4}, 1), zeros, Tensor::from({4}, {1, 2, 3, 4}), kLayerNormEps),
               {1, 2, 3, 4, 1, 2, 3, 4});
  Tensor y = layer_norm(random_tensor({5, 16}, 2), kLayerNormEps);
  for (std::int64_t r = 0; r < 5; ++r) {
    double m = 0.0, v = 0.0;
    for (std::int64_t j = 0; j < 16; ++j) m += y.at({r, j}) / 16.0;
    for (std::int64_t j = 0; j < 16; ++j) v += (y.at({r, j}) - m) * (y.at({r, j}) - m) / 16.0;
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(v - 1.0) < 1e-5);
  }
  CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 4}), Tensor::full({3}, 1.0), Tensor::zeros({3}), 1e-6), DimensionError);
}

TEST_CASE("pooling") {
  const Tensor grid = iota({1, 4, 4, 1});
  SUBCASE("average") {
    check_values(avg_pool2d(grid, 2), {3.5, 5.5, 11.5, 13.5});
    Tensor x = random_tensor({2, 5, 3, 2}, 3);
    check_values(avg_pool2d(x, 1), {x.data().begin(), x.data().end()}, 0.0);
    check_values(avg_pool2d(Tensor::full({1, 5, 7, 3}, 2.5), 3), std::vector<double>(2 * 3 * 3, 2.5));
    CHECK_THROWS_AS(avg_pool2d(grid, 0), ConfigError);
  }
  SUBCASE("ceil mode uses true member counts") {
    Tensor y = avg_pool2d(iota({1, 3, 3, 1}), 2);
    CHECK(y.shape() == Shape{1, 2, 2, 1});
    check_values(y, {3.0, 4.5, 7.5, 9.0});
  }
  SUBCASE("average preserves the global mean when r divides") {
    Tensor x = random_tensor({2, 8, 12, 3}, 4);
    CHECK(mean(avg_pool2d(x, 4)).item() == doctest::Approx(mean(x).item()).epsilon(1e-12));
  }
  SUBCASE("max") {
    check_values(max_pool2d(grid, 2), {6, 8, 14, 16});
    check_values(max_pool2d(Tensor::full({1, 3, 3, 2}, -1.0), 2), std::vector<double>(8, -1.0));
  }
  SUBCASE("overlapped r=1 is a 2x2 window mean") {
    Tensor x = random_tensor({1, 3, 4, 2}, 5);
    Tensor y = overlapped_avg_pool2d(x, 1);
    REQUIRE(y.shape() == x.shape());
    for (std::int64_t i = 0; i < 3; ++i) {
      for (std::int64_t j = 0; j < 4; ++j) {
        for (std::int64_t c = 0; c < 2; ++c) {
          double s = 0.0;
          int n = 0;
          for (std::int64_t di = 0; di <= 1; ++di) {
            for (std::int64_t dj = 0; dj <= 1; ++dj) {
              if (i + di < 3 && j + dj < 4) {
                s += x.at({0, i + di, j + dj, c});
                ++n;
              }
            }
          }
          CHECK(y.at({0, i, j, c}) == doctest::Approx(s / n).epsilon(1e-12));
        }
      }
    }
  }
  SUBCASE("overlapped r=2") {
    // windows rows/cols {0,1,2} and {2,3}
    Tensor y = overlapped_avg_pool2d(grid, 2);
    check_values(y, {6.0, 7.5, 12.0, 13.5});
  }
}

TEST_CASE("convolution") {
  SUBCASE("1x1 ones kernel is identity") {
    Tensor x = random_tensor({1, 4, 5, 1}, 6);
    check_values(conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), 1, 0), {x.data().begin(), x.data().end()});
  }
  SUBCASE("depthwise 3x3 ones on constant input") {
    Tensor y = depthwise_conv2d(Tensor::full({1, 5, 5, 2}, 1.0), Tensor::full({3, 3, 2}, 1.0));
    CHECK(y.at({0, 2, 2, 0}) == 9.0);
    CHECK(y.at({0, 1, 3, 1}) == 9.0);
    CHECK(y.at({0, 0, 0, 0}) == 4.0);
    CHECK(y.at({0, 0, 2, 1}) == 6.0);
  }
  SUBCASE("output extent law") {
    Tensor y = conv2d(Tensor::zeros({1, 64, 64, 3}), Tensor::zeros({7, 7, 3, 8}), 4, 3);
    CHECK(y.shape() == Shape{1, 16, 16, 8});
    Tensor z = conv2d(Tensor::zeros({1, 9, 7, 2}), Tensor::zeros({3, 3, 2, 4}), 2, 1);
    CHECK(z.shape() == Shape{1, 5, 4, 4});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 4, 4, 3}), Tensor::zeros({1, 1, 2, 1}), 1, 0), DimensionError);
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 2, 1}), Tensor::zeros({5, 5, 1, 1}), 1, 0), ConfigError);
  }
}

TEST_CASE("bilinear upsample") {
  check_values(bilinear_upsample(Tensor::from({1, 1, 2, 1}, {0, 1}), 1, 4), {0, 0.25, 0.75, 1});
  Tensor x = random_tensor({1, 3, 2, 2}, 7);
  check_values(bilinear_upsample(x, 3, 2), {x.data().begin(), x.data().end()}, 0.0);
  check_values(bilinear_upsample(Tensor::full({1, 2, 3, 1}, 4.0), 8, 9), std::vector<double>(72, 4.0));
  CHECK_THROWS_AS(bilinear_upsample(x, 2, 2), ConfigError);
}

TEST_CASE("elementwise, shape ops and reductions") {
  Tensor x = random_tensor({3, 4}, 8, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor a = random_tensor({5}, 9, true), b = random_tensor({5}, 10);
  backward(sum(mul(a, b)));
  for (std::size_t i = 0; i < 5; ++i) CHECK(a.grad()[i] == b.data()[i]);

  Tensor t = random_tensor({2, 3, 4}, 11);
  Tensor back = reshape(reshape(t, {4, -1}), {2, 3, 4});
  CHECK(std::equal(back.data().begin(), back.data().end(), t.data().begin()));
  Tensor tt = transpose(transpose(t, {2, 0, 1}), {1, 2, 0});
  CHECK(tt.shape() == t.shape());
  CHECK(std::equal(tt.data().begin(), tt.data().end(), t.data().begin()));

  Tensor cat = concat_lastdim({Tensor::from({2, 1}, {1, 2}), Tensor::from({2, 2}, {3, 4, 5, 6})});
  check_values(cat, {1, 3, 4, 2, 5, 6});
  CHECK(mean(Tensor::from({4}, {1, 2, 3, 6})).item() == 3.0);
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(gelu(Tensor::scalar(1.0)).item() == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  check_values(add(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2}, {10, 20})), {11, 22, 13, 24});
}

TEST_CASE("cross entropy") {
  const std::vector<int> labels{0, 1};
  Tensor logits = Tensor::from({2, 2}, {0, 0, 0, std::log(3.0)});
  const double expect = (std::log(2.0) + std::log(4.0 / 3.0)) / 2.0;
  CHECK(cross_entropy(logits, labels).item() == doctest::Approx(expect).epsilon(1e-14));
  const std::vector<int> ignored{0, kIgnoreIndex};
  CHECK(cross_entropy(logits, ignored).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("graph discipline") {
  Tensor x = random_tensor({3}, 12, true);
  Tensor loss = sum(mul(x, x));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), UsageError);
  CHECK_THROWS_AS(backward(mul(x, x)), UsageError);
  {
    NoGradGuard guard;
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
}

TEST_CASE("determinism of forward and backward") {
  auto run = [] {
    Tensor w = random_tensor({6, 5}, 13, true);
    Tensor x = random_tensor({2, 4, 6}, 14);
    backward(mean(gelu(matmul(x, w))));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("mac counter") {
  ScopedMacCount count;
  matmul(Tensor::zeros({2, 3}), Tensor::zeros({3, 4}));
  CHECK(count.elapsed() == 24);
}
