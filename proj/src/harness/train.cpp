// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include "efaseg/error.hpp"
#include "efaseg/harness.hpp"
#include "efaseg/ops.hpp"

namespace efaseg {

namespace {

struct ParamRef {
  std::string name;
  Tensor* tensor;
};

std::vector<ParamRef> collect_params(Model& model) {
  std::vector<ParamRef> out;
  model.weights.for_each([&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
  return out;
}

void check_options(const TrainOptions& o) {
  if (o.steps < 0) throw ConfigError("steps must be non-negative");
  if (o.batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(o.lr >= 0.0) || !std::isfinite(o.lr)) throw ConfigError("learning rate must be finite and non-negative");
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(o.adam_eps > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (!(o.weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (o.warmup_steps < 0) throw ConfigError("warmup steps must be non-negative");
  if (o.stop_at && *o.stop_at < 0) throw ConfigError("stop step must be non-negative");
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

double learning_rate(const TrainOptions& options, std::int64_t step) {
  if (step < options.warmup_steps) {
    return options.lr * static_cast<double>(step + 1) / static_cast<double>(options.warmup_steps);
  }
  const std::int64_t decay_steps = options.steps - options.warmup_steps;
  if (decay_steps <= 0) return options.lr;
  const double progress = static_cast<double>(step - options.warmup_steps) / static_cast<double>(decay_steps);
  return options.lr * std::max(0.0, 1.0 - progress);
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                 const std::vector<bool>& flips) {
  if (indices.empty()) throw UsageError("empty batch");
  const SyntheticScene& first = data.at(indices.front());
  const std::int64_t h = first.height, w = first.width;
  std::vector<double> images;
  images.reserve(indices.size() * static_cast<std::size_t>(h * w * 3));
  Batch b;
  b.labels.reserve(indices.size() * static_cast<std::size_t>(h * w));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const SyntheticScene& s = data.at(indices[k]);
    if (s.height != h || s.width != w) throw DimensionError("scenes in a batch must share extents");
    const bool flip = k < flips.size() && flips[k];
    const auto px = s.image.data();
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t sx = flip ? w - 1 - x : x;
        const std::size_t src = static_cast<std::size_t>(y * w + sx);
        for (int c = 0; c < 3; ++c) images.push_back(px[src * 3 + static_cast<std::size_t>(c)]);
        b.labels.push_back(s.labels[src]);
      }
    }
  }
  b.images = Tensor::from({static_cast<std::int64_t>(indices.size()), h, w, 3}, std::move(images));
  return b;
}

TrainResult train(Model& model, const Dataset& data, const TrainOptions& options,
                  const TrainState* resume) {
  check_options(options);
  if (data.empty()) throw UsageError("cannot train on an empty dataset");
  model.config.validate();
  model.config.validate_input(data.front().height, data.front().width);
  for (const SyntheticScene& s : data) {
    for (int label : s.labels) {
      if (label != kIgnoreIndex && (label < 0 || label >= model.config.num_classes)) {
        throw ConfigError("dataset label " + std::to_string(label) + " outside the model's " +
                          std::to_string(model.config.num_classes) + " classes");
      }
    }
  }

  std::vector<ParamRef> params = collect_params(model);
  TrainResult result;
  TrainState& st = result.state;
  if (resume != nullptr) {
    st = *resume;
    if (st.first_moment.size() != params.size() || st.second_moment.size() != params.size()) {
      throw UsageError("optimizer state does not match the model's parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (st.first_moment[i].shape() != params[i].tensor->shape() ||
          st.second_moment[i].shape() != params[i].tensor->shape()) {
        throw UsageError("optimizer state shape mismatch for " + params[i].name);
      }
      // private copies: the caller's state stays untouched
      st.first_moment[i] = st.first_moment[i].detach();
      st.second_moment[i] = st.second_moment[i].detach();
    }
  } else {
    st.step = 0;
    st.rng = Rng(options.seed);
    for (const ParamRef& p : params) {
      st.first_moment.push_back(Tensor::zeros(p.tensor->shape()));
      st.second_moment.push_back(Tensor::zeros(p.tensor->shape()));
    }
  }
  for (const ParamRef& p : params) p.tensor->set_requires_grad(true);

  const ReductionSchedule schedule = model.config.training_schedule();
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::bernoulli_distribution coin(0.5);
  double grad_norm = 0.0;

  const std::int64_t end = options.stop_at ? std::min(*options.stop_at, options.steps) : options.steps;
  for (; st.step < end; ++st.step) {
    const double lr = learning_rate(options, st.step);
    std::vector<std::size_t> idx(static_cast<std::size_t>(options.batch_size));
    std::vector<bool> flips(idx.size(), false);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      idx[k] = pick(st.rng);
      if (options.hflip) flips[k] = coin(st.rng);
    }
    const Batch batch = make_batch(data, idx, flips);

    for (const ParamRef& p : params) p.tensor->zero_grad();
    double loss_value = 0.0;
    try {
      Tensor logits = model_forward(batch.images, model, schedule, Phase::kTrain);
      Tensor loss = cross_entropy(logits, batch.labels);
      loss_value = loss.item();
      backward(loss);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(st.step) + " (lr " + fmt(lr) +
                         ", previous grad-norm " + fmt(grad_norm) + "): " + e.what());
    }

    double sq = 0.0;
    for (const ParamRef& p : params) {
      if (!p.tensor->has_grad()) continue;
      for (double g : p.tensor->grad()) sq += g * g;
    }
    grad_norm = std::sqrt(sq);
    if (!std::isfinite(loss_value) || !std::isfinite(grad_norm)) {
      throw NumericError("training diverged at step " + std::to_string(st.step) + " (lr " + fmt(lr) +
                         ", grad-norm " + fmt(grad_norm) + ", loss " + fmt(loss_value) + ")");
    }

    const double t = static_cast<double>(st.step + 1);
    const double bc1 = 1.0 - std::pow(options.beta1, t);
    const double bc2 = 1.0 - std::pow(options.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i].tensor;
      auto m = st.first_moment[i].mutable_data();
      auto v = st.second_moment[i].mutable_data();
      auto w = p.mutable_data();
      const bool has_grad = p.has_grad();
      const std::span<const double> g = has_grad ? p.grad() : std::span<const double>{};
      const double decay = p.rank() >= 2 ? options.weight_decay : 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = has_grad ? g[j] : 0.0;
        m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * gj;
        v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * gj * gj;
        const double mhat = m[j] / bc1, vhat = v[j] / bc2;
        w[j] -= lr * (mhat / (std::sqrt(vhat) + options.adam_eps) + decay * w[j]);
      }
    }
    result.loss_curve.push_back(loss_value);
    if (options.on_step) options.on_step(st.step, loss_value);
  }
  for (const ParamRef& p : params) p.tensor->zero_grad();
  return result;
}

}  // namespace efaseg
