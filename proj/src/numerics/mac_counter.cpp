// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "efaseg/mac_counter.hpp"

namespace efaseg::mac_counter {
namespace {
thread_local std::uint64_t g_macs = 0;
}

void add(std::uint64_t macs) { g_macs += macs; }
std::uint64_t value() { return g_macs; }
void reset() { g_macs = 0; }

}  // namespace efaseg::mac_counter
