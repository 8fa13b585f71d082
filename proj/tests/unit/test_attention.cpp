// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "efaseg/attention.hpp"
#include "efaseg/error.hpp"
#include "efaseg/flops.hpp"
#include "attention_oracle.hpp"
#include "gradcheck.hpp"

using namespace efaseg;
using efaseg::testing::brute_force;
using efaseg::testing::random_tensor;
using efaseg::testing::scaled_init;

namespace {

void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.data().size(); ++i) CHECK(std::abs(a.data()[i] - b.data()[i]) < tol);
}

}  // namespace

TEST_CASE("brute-force oracle agreement over random cases") {
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<int> extent(1, 6), pick(0, 2), ratio(1, 4), coin(0, 1);
  const std::int64_t channel_options[] = {2, 4, 6, 8};
  int cases = 0;
  for (int trial = 0; trial < 120; ++trial) {
    AttentionConfig cfg;
    cfg.channels = channel_options[pick(rng) + coin(rng)];
    cfg.heads = cfg.channels % 2 == 0 && coin(rng) ? 2 : 1;
    cfg.variant = coin(rng) ? AttentionVariant::kEmbedded : AttentionVariant::kEmbeddingFree;
    cfg.pooling = static_cast<Pooling>(pick(rng));
    cfg.sr_projection = coin(rng) == 1;
    cfg.bias_free = coin(rng) == 1;
    const std::int64_t r = ratio(rng);
    const Tensor x = random_tensor({1, extent(rng), extent(rng), cfg.channels}, rng);
    const AttentionWeights w = scaled_init(cfg, rng, 1.0);
    check_close(attention_forward(x, cfg, w, r), brute_force(x, cfg, w, r), 1e-6);
    ++cases;
  }
  CHECK(cases >= 50);
}

TEST_CASE("documented case b=1 h=w=4 c=8 heads=2 r=2") {
  std::mt19937_64 rng(4);
  AttentionConfig cfg{.channels = 8, .heads = 2};
  const Tensor x = random_tensor({1, 4, 4, 8}, rng);
  const AttentionWeights w = scaled_init(cfg, rng, 1.0);
  check_close(efa_forward(x, cfg, w, 2), brute_force(x, cfg, w, 2), 1e-6);
  cfg.variant = AttentionVariant::kEmbedded;
  const AttentionWeights we = scaled_init(cfg, rng, 1.0);
  check_close(embedded_sra_forward(x, cfg, we, 2), brute_force(x, cfg, we, 2), 1e-6);
}

TEST_CASE("single token with identity output is the identity") {
  AttentionConfig cfg{.channels = 3, .heads = 1};
  const AttentionWeights w = AttentionWeights::zeros(cfg, true);
  const Tensor x = Tensor::from({1, 1, 1, 3}, {0.3, -1.0, 2.0});
  const Tensor y = efa_forward(x, cfg, w, 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-15));
}

TEST_CASE("one pooled key makes every position identical") {
  std::mt19937_64 rng(8);
  AttentionConfig cfg{.channels = 4, .heads = 2};
  const AttentionWeights w = scaled_init(cfg, rng, 1.0);
  const Tensor x = random_tensor({1, 4, 4, 4}, rng);
  const Tensor y = efa_forward(x, cfg, w, 4);
  for (std::int64_t p = 1; p < 16; ++p) {
    for (std::int64_t c = 0; c < 4; ++c) {
      CHECK(y.data()[static_cast<std::size_t>(p * 4 + c)] == doctest::Approx(y.data()[static_cast<std::size_t>(c)]).epsilon(1e-12));
    }
  }
  const Tensor map = attention_map(x, cfg, w, 4);
  CHECK(map.shape() == Shape{1, 2, 16, 1});
  for (double v : map.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("shape invariance and map rows") {
  std::mt19937_64 rng(9);
  AttentionConfig cfg{.channels = 8, .heads = 4};
  const AttentionWeights w = scaled_init(cfg, rng, 1.0);
  const Tensor x = random_tensor({2, 8, 8, 8}, rng);
  for (std::int64_t r : {1, 2, 4, 8}) CHECK(efa_forward(x, cfg, w, r).shape() == x.shape());
  const Tensor map = attention_map(x, cfg, w, 2);
  CHECK(map.shape() == Shape{2, 4, 64, 16});
  for (std::int64_t row = 0; row < 2 * 4 * 64; ++row) {
    double s = 0.0;
    for (std::int64_t k = 0; k < 16; ++k) s += map.data()[static_cast<std::size_t>(row * 16 + k)];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(efa_forward(x, cfg, w, 0), ConfigError);
}

TEST_CASE("spatial reduction") {
  AttentionConfig cfg{.channels = 2, .heads = 1};
  const AttentionWeights w = AttentionWeights::zeros(cfg);
  std::vector<double> grid;
  for (int v = 1; v <= 16; ++v) {
    grid.push_back(v);
    grid.push_back(v);
  }
  const Tensor x = Tensor::from({1, 4, 4, 2}, grid);
  const Tensor same = spatial_reduce(x, 1, cfg, w);
  CHECK(std::equal(same.data().begin(), same.data().end(), x.data().begin()));
  const Tensor y = spatial_reduce(x, 2, cfg, w);
  const std::vector<double> expect{3.5, 3.5, 5.5, 5.5, 11.5, 11.5, 13.5, 13.5};
  CHECK(std::equal(y.data().begin(), y.data().end(), expect.begin()));
  const Tensor big = Tensor::zeros({1, 14, 14, 2});
  CHECK(spatial_reduce(big, 2, cfg, w).dim(1) * spatial_reduce(big, 2, cfg, w).dim(2) == 49);
  CHECK_THROWS_AS(spatial_reduce(x, 0, cfg, w), ConfigError);
}

TEST_CASE("identity embeddings reduce to the embedding-free operator") {
  std::mt19937_64 rng(10);
  AttentionConfig cfg{.channels = 6, .heads = 3};
  AttentionConfig emb = cfg;
  emb.variant = AttentionVariant::kEmbedded;
  const AttentionWeights w = scaled_init(cfg, rng, 1.0);
  AttentionWeights we = AttentionWeights::zeros(emb);
  for (Tensor* t : {&we.wq, &we.wk, &we.wv}) {
    for (std::int64_t i = 0; i < 6; ++i) t->mutable_data()[static_cast<std::size_t>(i * 6 + i)] = 1.0;
  }
  we.wo = w.wo;
  const Tensor x = random_tensor({1, 5, 3, 6}, rng);
  for (std::int64_t r : {1, 2, 3}) check_close(embedded_sra_forward(x, emb, we, r), efa_forward(x, cfg, w, r), 1e-12);
}

TEST_CASE("parameter counts") {
  for (std::int64_t c : {4, 32, 128}) {
    for (bool sr : {false, true}) {
      for (bool bias_free : {true, false}) {
        std::mt19937_64 rng(1);
        AttentionConfig cfg{.channels = c, .heads = 1, .sr_projection = sr, .bias_free = bias_free};
        AttentionConfig emb = cfg;
        emb.variant = AttentionVariant::kEmbedded;
        const auto free_w = AttentionWeights::init(cfg, rng);
        const auto emb_w = AttentionWeights::init(emb, rng);
        CHECK_FALSE(free_w.wq.defined());
        CHECK_FALSE(free_w.wk.defined());
        CHECK_FALSE(free_w.wv.defined());
        if (bias_free) CHECK(emb_w.parameter_count() - free_w.parameter_count() == 3 * c * c);
        for (const auto* pair : {&cfg, &emb}) {
          const FlopReport rep = attention_cost(196, c, 2, 1, pair->variant, sr, bias_free);
          const auto& weights = pair == &cfg ? free_w : emb_w;
          CHECK(rep.total().params == weights.parameter_count());
        }
      }
    }
  }
}

TEST_CASE("channel permutation consistency") {
  std::mt19937_64 rng(12);
  AttentionConfig cfg{.channels = 5, .heads = 1};
  const AttentionWeights w = scaled_init(cfg, rng, 1.0);
  const Tensor x = random_tensor({1, 4, 3, 5}, rng);
  const std::vector<std::int64_t> perm{2, 4, 0, 1, 3};
  auto permute_last = [&](const Tensor& t) {
    std::vector<double> v(t.data().size());
    for (std::size_t p = 0; p < v.size() / 5; ++p) {
      for (std::size_t j = 0; j < 5; ++j) v[p * 5 + j] = t.data()[p * 5 + static_cast<std::size_t>(perm[j])];
    }
    return Tensor::from(t.shape(), v);
  };
  AttentionWeights wp = w;
  std::vector<double> wo(25);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) wo[i * 5 + j] = w.wo.data()[static_cast<std::size_t>(perm[i] * 5 + perm[j])];
  }
  wp.wo = Tensor::from({5, 5}, wo);
  check_close(efa_forward(permute_last(x), cfg, wp, 2), permute_last(efa_forward(x, cfg, w, 2)), 1e-12);
}

TEST_CASE("constant input gives constant output") {
  std::mt19937_64 rng(13);
  AttentionConfig cfg{.channels = 4, .heads = 2};
  const AttentionWeights w = scaled_init(cfg, rng, 1.0);
  std::vector<double> v;
  for (int p = 0; p < 36; ++p) v.insert(v.end(), {0.5, -1.0, 2.0, 0.1});
  const Tensor x = Tensor::from({1, 6, 6, 4}, v);
  for (std::int64_t r : {1, 2, 4, 8}) {
    const Tensor y = efa_forward(x, cfg, w, r);
    for (std::size_t i = 4; i < y.data().size(); ++i) CHECK(y.data()[i] == doctest::Approx(y.data()[i % 4]).epsilon(1e-12));
  }
}

TEST_CASE("config validation") {
  AttentionConfig cfg{.channels = 6, .heads = 4};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.heads = 3;
  cfg.train_ratio = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_variant("embedded") == AttentionVariant::kEmbedded);
  CHECK(parse_pooling("overlapped") == Pooling::kOverlapped);
  CHECK_THROWS_AS(parse_pooling("median"), ConfigError);
}
