// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "efaseg/error.hpp"
#include "efaseg/harness.hpp"
#include "efaseg/parallel.hpp"
#include "efaseg/serialize.hpp"

namespace efaseg {

namespace {

using Color = std::array<double, 3>;

Color hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(hh);
  const double f = hh - sector;
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Mean color of a foreground class; class 0 is the grey background.
Color class_color(std::int64_t cls, std::int64_t num_classes) {
  const double hue = static_cast<double>(cls - 1) / static_cast<double>(std::max<std::int64_t>(1, num_classes - 1));
  return hsv_to_rgb(hue, 0.85, 0.9);
}

}  // namespace

void SceneParams::validate() const {
  if (height < 1 || width < 1) throw ConfigError("scene extents must be positive");
  if (num_classes < 2) throw ConfigError("need at least 2 classes, got " + std::to_string(num_classes));
  if (num_classes > 254) throw ConfigError("at most 254 classes are supported");
  if (min_shapes < 1 || max_shapes < min_shapes) throw ConfigError("shape count range must satisfy 1 <= min <= max");
  if (!(noise >= 0.0)) throw ConfigError("noise must be non-negative");
}

Tensor SyntheticScene::label_tensor() const {
  std::vector<double> v(labels.begin(), labels.end());
  return Tensor::from({height, width}, std::move(v));
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, std::int64_t index) {
  // splitmix64 over the combined key
  std::uint64_t z = dataset_seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SyntheticScene generate_scene(const SceneParams& params, std::uint64_t seed) {
  params.validate();
  const std::int64_t h = params.height, w = params.width;
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<int> labels(static_cast<std::size_t>(h * w), 0);
  std::vector<double> img(static_cast<std::size_t>(h * w * 3));

  // background: grey base with a low-contrast stripe texture
  const double base = 0.35 + 0.2 * unit(rng);
  const double fx = 0.2 + 0.6 * unit(rng), fy = 0.2 + 0.6 * unit(rng);
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double g = base + 0.06 * std::sin(fx * static_cast<double>(x) + fy * static_cast<double>(y) + phase);
      for (int ch = 0; ch < 3; ++ch) img[static_cast<std::size_t>((y * w + x) * 3 + ch)] = g;
    }
  }

  const std::int64_t extent = std::min(h, w);
  std::uniform_int_distribution<std::int64_t> count_dist(params.min_shapes, params.max_shapes);
  std::uniform_int_distribution<std::int64_t> class_dist(1, params.num_classes - 1);
  const std::int64_t shapes = count_dist(rng);
  for (std::int64_t s = 0; s < shapes; ++s) {
    const std::int64_t cls = class_dist(rng);
    Color color = class_color(cls, params.num_classes);
    for (double& c : color) c = std::clamp(c + 0.05 * (unit(rng) - 0.5), 0.0, 1.0);
    const bool circle = !params.rectangles_only && unit(rng) < 0.5;

    auto paint = [&](std::int64_t y, std::int64_t x) {
      labels[static_cast<std::size_t>(y * w + x)] = static_cast<int>(cls);
      for (int ch = 0; ch < 3; ++ch) img[static_cast<std::size_t>((y * w + x) * 3 + ch)] = color[static_cast<std::size_t>(ch)];
    };

    if (circle) {
      const double lo = std::max(1.5, extent / 10.0), hi = std::max(lo, extent / 5.0);
      const double radius = lo + (hi - lo) * unit(rng);
      const double cy = static_cast<double>(h) * unit(rng), cx = static_cast<double>(w) * unit(rng);
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
          const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
          if (dy * dy + dx * dx <= radius * radius) paint(y, x);
        }
      }
    } else {
      const std::int64_t lo = std::max<std::int64_t>(1, extent / 6), hi = std::max(lo, extent * 2 / 5);
      std::uniform_int_distribution<std::int64_t> size_dist(lo, hi);
      const std::int64_t rh = std::min(h, size_dist(rng)), rw = std::min(w, size_dist(rng));
      const std::int64_t y0 = std::uniform_int_distribution<std::int64_t>(0, h - rh)(rng);
      const std::int64_t x0 = std::uniform_int_distribution<std::int64_t>(0, w - rw)(rng);
      for (std::int64_t y = y0; y < y0 + rh; ++y) {
        for (std::int64_t x = x0; x < x0 + rw; ++x) paint(y, x);
      }
    }
  }

  for (double& v : img) v = std::clamp(v + params.noise * gauss(rng), 0.0, 1.0);

  SyntheticScene scene;
  scene.image = Tensor::from({h, w, 3}, std::move(img));
  scene.labels = std::move(labels);
  scene.height = h;
  scene.width = w;
  scene.seed = seed;
  return scene;
}

Dataset generate_dataset(std::int64_t n, const SceneParams& params, std::uint64_t seed) {
  params.validate();
  if (n < 0) throw ConfigError("scene count must be non-negative");
  Dataset out(static_cast<std::size_t>(n));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = generate_scene(params, scene_seed(seed, static_cast<std::int64_t>(i)));
  });
  return out;
}

Dataset generate_dataset(std::int64_t n, std::int64_t height, std::int64_t width,
                         std::int64_t num_classes, std::uint64_t seed) {
  SceneParams p;
  p.height = height;
  p.width = width;
  p.num_classes = num_classes;
  return generate_dataset(n, p, seed);
}

void write_dataset(const std::filesystem::path& dir, const Dataset& scenes) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  std::ofstream index(dir / "index.tsv", std::ios::binary);
  if (!index) throw IoError("cannot write " + (dir / "index.tsv").string());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::ostringstream name;
    name << "scene_" << std::setw(5) << std::setfill('0') << i << ".eft";
    std::ofstream out(dir / name.str(), std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / name.str()).string());
    write_tensor(out, scenes[i].image, DType::kF64);
    write_tensor(out, scenes[i].label_tensor(), DType::kF32);
    if (!out) throw IoError("write failed for " + (dir / name.str()).string());
    index << scenes[i].seed << '\t' << name.str() << '\n';
  }
  if (!index) throw IoError("write failed for " + (dir / "index.tsv").string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.tsv", std::ios::binary);
  if (!index) throw IoError("cannot read " + (dir / "index.tsv").string());
  Dataset out;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("malformed index line: " + line);
    SyntheticScene scene;
    try {
      scene.seed = std::stoull(line.substr(0, tab));
    } catch (const std::exception&) {
      throw IoError("malformed seed in index line: " + line);
    }
    const std::filesystem::path file = dir / line.substr(tab + 1);
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read " + file.string());
    scene.image = read_tensor(in);
    const Tensor lab = read_tensor(in);
    if (scene.image.rank() != 3 || scene.image.dim(2) != 3 || lab.rank() != 2 ||
        lab.dim(0) != scene.image.dim(0) || lab.dim(1) != scene.image.dim(1)) {
      throw IoError("inconsistent image/label shapes in " + file.string());
    }
    scene.height = lab.dim(0);
    scene.width = lab.dim(1);
    scene.labels.reserve(static_cast<std::size_t>(lab.numel()));
    for (double v : lab.data()) scene.labels.push_back(static_cast<int>(v));
    out.push_back(std::move(scene));
  }
  return out;
}

}  // namespace efaseg
