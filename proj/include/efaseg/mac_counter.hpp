// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace efaseg {

// Per-thread tally of multiply-accumulates performed by the numerics ops.
//
// Counted: matmul (m·k·n per batch), conv2d and depthwise conv (every kernel
// tap at every output position), pooling (one accumulation per window
// member per channel) and layer norm (one scaling multiply per element).
// Not counted: softmax, elementwise ops, bias adds, upsampling, losses.
namespace mac_counter {

void add(std::uint64_t macs);
std::uint64_t value();
void reset();

}  // namespace mac_counter

// Measures the MACs performed on this thread during its lifetime.
class ScopedMacCount {
 public:
  ScopedMacCount() : start_(mac_counter::value()) {}
  std::uint64_t elapsed() const { return mac_counter::value() - start_; }

 private:
  std::uint64_t start_;
};

}  // namespace efaseg
