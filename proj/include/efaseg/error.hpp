// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace efaseg {

// Error taxonomy. The CLI maps each family onto an exit code.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (ratio < 1, undersized input, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced by an op, or a diverging loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on a non-scalar, double backward, empty dataset.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed text (schedules, config documents).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at position " + std::to_string(position) + ")"),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace efaseg
