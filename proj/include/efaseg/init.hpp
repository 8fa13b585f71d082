// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>

#include "efaseg/tensor.hpp"

namespace efaseg {

using Rng = std::mt19937_64;

// Trainable leaf drawn from N(0, stddev²), truncated at two deviations.
Tensor normal_param(Shape shape, double stddev, Rng& rng);
Tensor zeros_param(Shape shape);
Tensor ones_param(Shape shape);

}  // namespace efaseg
