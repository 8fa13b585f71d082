// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "efaseg/error.hpp"
#include "efaseg/flops.hpp"
#include "efaseg/mac_counter.hpp"
#include "efaseg/model.hpp"
#include "gradcheck.hpp"

using namespace efaseg;
using efaseg::testing::random_tensor;

namespace {

ModelConfig tiny() {
  ModelConfig c = ModelConfig::nano();
  c.stage_channels = {4, 4, 8, 8};
  c.stage_heads = {1, 2, 2, 2};
  c.stage_depths = {1, 1, 1, 1};
  c.decoder_depths = {1, 1, 1};
  c.fusion_channels = 6;
  c.expansion = 2;
  return c;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST_CASE("encoder resolution law") {
  const Model m = Model::init(ModelConfig::nano(), 1);
  std::mt19937_64 rng(1);
  const Tensor img = random_tensor({1, 64, 64, 3}, rng);
  NoGradGuard guard;
  const auto f = encoder_forward(img, m, {8, 4, 2, 1});
  const Shape expect[] = {{1, 16, 16, 16}, {1, 8, 8, 32}, {1, 4, 4, 64}, {1, 2, 2, 128}};
  for (std::size_t i = 0; i < 4; ++i) CHECK(f[i].shape() == expect[i]);
  const auto g = encoder_forward(img, m, {16, 8, 4, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i].shape() == expect[i]);
}

TEST_CASE("zero-weight encoder blocks reduce to the patch-embedding cascade") {
  Model m = Model::init(tiny(), 2);
  for (auto& stage : m.weights.encoder) {
    for (auto& block : stage.blocks) {
      block.for_each("", [](const std::string&, Tensor& t) {
        for (double& v : t.mutable_data()) v = 0.0;
      });
    }
  }
  std::mt19937_64 rng(2);
  const Tensor img = random_tensor({1, 32, 32, 3}, rng);
  NoGradGuard guard;
  const auto f = encoder_forward(img, m, {8, 4, 2, 1});
  Tensor x = img;
  for (int s = 1; s <= 4; ++s) {
    x = patch_embed_forward(x, m.config.patch_embed(s), m.weights.encoder[static_cast<std::size_t>(s - 1)].embed);
    CHECK(bitwise_equal(f[static_cast<std::size_t>(s - 1)], x));
  }
}

TEST_CASE("decoder mask and concat law") {
  const Model m = Model::init(ModelConfig::nano(), 3);
  std::mt19937_64 rng(3);
  const Tensor img = random_tensor({2, 64, 64, 3}, rng);
  NoGradGuard guard;
  const auto f = encoder_forward(img, m, {8, 4, 2, 1});
  const Tensor mask = decoder_forward(f[1], f[2], f[3], m, {1, 2, 4});
  CHECK(mask.shape() == Shape{2, 8, 8, 3});
  const auto u = decoder_features(img, m, m.config.training_schedule(), Phase::kTrain);
  CHECK(u[0].dim(3) == 128);
  CHECK(u[1].dim(3) == 64);
  CHECK(u[2].dim(3) == 32);
  CHECK(m.weights.fuse_w.dim(0) == 32 + 64 + 128);
  CHECK(bitwise_equal(mask, decoder_forward(f[1], f[2], f[3], m, {1, 2, 4})));
  CHECK_THROWS_AS(decoder_forward(f[2], f[2], f[3], m, {1, 2, 4}), DimensionError);
  // the decoder never reads F1: logits follow from F2..F4 alone
  const Tensor logits = model_forward(img, m, m.config.training_schedule(), Phase::kTrain);
  CHECK(bitwise_equal(logits, bilinear_upsample(mask, 64, 64)));
}

TEST_CASE("schedule and batch laws") {
  const Model m = Model::init(ModelConfig::nano(), 4);
  std::mt19937_64 rng(4);
  const Tensor one = random_tensor({1, 64, 64, 3}, rng);
  NoGradGuard guard;
  const ReductionSchedule s = m.config.training_schedule();
  const Tensor train = model_forward(one, m, s, Phase::kTrain);
  CHECK(train.shape() == Shape{1, 64, 64, 3});
  CHECK(bitwise_equal(train, model_forward(one, m, s, Phase::kInference)));
  for (std::int64_t a : {2, 4}) {
    ReductionSchedule raised{s.train, {{a, a, a, a}, {a, a, a}}};
    CHECK(model_forward(one, m, raised, Phase::kInference).shape() == train.shape());
  }
  std::vector<double> twice(one.data().begin(), one.data().end());
  twice.insert(twice.end(), one.data().begin(), one.data().end());
  const Tensor pair = model_forward(Tensor::from({2, 64, 64, 3}, twice), m, s, Phase::kTrain);
  const std::size_t half = pair.data().size() / 2;
  CHECK(std::equal(pair.data().begin(), pair.data().begin() + static_cast<std::ptrdiff_t>(half),
                   pair.data().begin() + static_cast<std::ptrdiff_t>(half)));
}

TEST_CASE("input validation") {
  const Model m = Model::init(tiny(), 5);
  NoGradGuard guard;
  CHECK_THROWS_AS(model_forward(Tensor::zeros({1, 48, 48, 3}), m, m.config.training_schedule(), Phase::kTrain), ConfigError);
  CHECK_THROWS_AS(model_forward(Tensor::zeros({1, 16, 16, 3}), m, m.config.training_schedule(), Phase::kTrain), ConfigError);
  CHECK_THROWS_AS(model_forward(Tensor::zeros({1, 32, 32, 1}), m, m.config.training_schedule(), Phase::kTrain), DimensionError);
  ModelConfig bad = tiny();
  bad.num_classes = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("full-model finite-difference spot check") {
  Model m = Model::init(tiny(), 6);
  std::mt19937_64 rng(6);
  const Tensor img = random_tensor({1, 32, 32, 3}, rng);
  std::vector<int> labels(32 * 32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
  auto loss_fn = [&] { return cross_entropy(model_forward(img, m, m.config.training_schedule(), Phase::kTrain), labels); };

  std::vector<std::pair<std::string, Tensor>> params;
  m.weights.for_each([&](const std::string& n, Tensor& t) {
    t.zero_grad();
    params.emplace_back(n, t);
  });
  backward(loss_fn());
  std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
  NoGradGuard guard;
  for (int trial = 0; trial < 5; ++trial) {
    Tensor& p = params[pick_param(rng)].second;
    std::uniform_int_distribution<std::size_t> pick_entry(0, static_cast<std::size_t>(p.numel()) - 1);
    const std::size_t i = pick_entry(rng);
    const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
    auto d = p.mutable_data();
    const double orig = d[i], h = 1e-5;
    d[i] = orig + h;
    const double up = loss_fn().item();
    d[i] = orig - h;
    const double down = loss_fn().item();
    d[i] = orig;
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    INFO(params[0].first << " analytic " << analytic << " numeric " << numeric);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("parameter count equals the analytic count") {
  std::vector<ModelConfig> configs{ModelConfig::nano(), ModelConfig::micro(), tiny()};
  ModelConfig emb = ModelConfig::nano();
  emb.variant = AttentionVariant::kEmbedded;
  emb.bias_free = false;
  emb.sr_projection = true;
  configs.push_back(emb);
  for (auto depths : {std::array<std::int64_t, 3>{2, 2, 2}, {1, 2, 3}, {1, 4, 1}, {0, 0, 0}}) {
    ModelConfig c = ModelConfig::nano();
    c.decoder_depths = depths;
    configs.push_back(c);
  }
  for (const ModelConfig& c : configs) {
    Model m = Model::init(c, 7);
    const auto cost = model_cost(c, c.training_schedule(), Phase::kTrain, 64, 64);
    CHECK(count_parameters(m) == cost.total().params);
  }
}

TEST_CASE("counted MACs equal the analytic model cost") {
  for (Pooling pooling : {Pooling::kAverage, Pooling::kMax, Pooling::kOverlapped}) {
    ModelConfig c = ModelConfig::nano();
    c.pooling = pooling;
    c.sr_projection = pooling == Pooling::kOverlapped;
    const Model m = Model::init(c, 8);
    NoGradGuard guard;
    for (const ReductionSchedule& s : {c.training_schedule(), ReductionSchedule{c.train_ratios, {{2, 2, 1, 1}, {2, 2, 2}}}}) {
      ScopedMacCount count;
      model_forward(Tensor::zeros({1, 64, 64, 3}), m, s, Phase::kInference);
      const auto cost = model_cost(c, s, Phase::kInference, 64, 64);
      CHECK(static_cast<double>(count.elapsed()) == cost.total().macs);
    }
  }
}

TEST_CASE("config json") {
  ModelConfig c = ModelConfig::micro();
  c.decoder_depths = {1, 4, 1};
  c.pooling = Pooling::kMax;
  CHECK(model_config_from_json(to_json(c)) == c);
  nlohmann::json doc = to_json(c);
  doc["mystery"] = 1;
  CHECK_THROWS_AS(model_config_from_json(doc), ConfigError);
  CHECK(ModelConfig::micro().stage_channels == std::array<std::int64_t, 4>{32, 64, 128, 256});
  CHECK_THROWS_AS(ModelConfig::named("huge"), ConfigError);
}
