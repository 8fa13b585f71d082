// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace efaseg {

enum class Phase { kTrain, kInference };

// Per-stage key/value reduction ratios, written "[e1,e2,e3,e4]-[d1,d2,d3]".
struct RatioSet {
  std::array<std::int64_t, 4> encoder{1, 1, 1, 1};
  std::array<std::int64_t, 3> decoder{1, 1, 1};

  bool operator==(const RatioSet&) const = default;
  static RatioSet ones() { return {}; }
  static RatioSet default_training() { return {{8, 4, 2, 1}, {1, 2, 4}}; }
  // Throws ConfigError if any entry is < 1.
  void validate(std::string_view what) const;
};

// Parses "[i,i,i,i]-[i,i,i]" with optional whitespace. Throws ParseError with
// the offending character position.
RatioSet parse_ratios(std::string_view text);
std::string format_ratios(const RatioSet& ratios);

// Training ratios t and inference multipliers a; effective inference ratios
// are r = t·a, computed on demand.
struct ReductionSchedule {
  RatioSet train = RatioSet::default_training();
  RatioSet multiplier = RatioSet::ones();

  bool operator==(const ReductionSchedule&) const = default;
  void validate() const;
  bool is_identity() const { return multiplier == RatioSet::ones(); }

  // Schedule whose inference ratios equal `effective`. Throws ConfigError
  // when some effective ratio is not a positive multiple of its training
  // ratio (that would need a < 1 or a fractional a).
  static ReductionSchedule factorize(const RatioSet& train, const RatioSet& effective);
};

// train → t; inference → t·a, elementwise.
RatioSet effective_ratios(const ReductionSchedule& schedule, Phase phase);

// Parses an effective-ratio string and factorizes it against `train`.
ReductionSchedule parse_schedule(std::string_view text, const RatioSet& train);
// Formats the effective inference ratios.
std::string format_schedule(const ReductionSchedule& schedule);

}  // namespace efaseg
