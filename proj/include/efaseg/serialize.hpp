// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "efaseg/tensor.hpp"

namespace efaseg {

// Binary tensor encoding, little-endian:
//   "EFT1" | u8 dtype (0 = f32, 1 = f64) | u8 rank | rank × u64 extents |
//   values row-major.
enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

void write_tensor(std::ostream& out, const Tensor& t, DType dtype = DType::kF64);
// Values are widened to double on read. Throws IoError on malformed input.
Tensor read_tensor(std::istream& in);

std::vector<char> encode_tensor(const Tensor& t, DType dtype = DType::kF64);
Tensor decode_tensor(const std::vector<char>& bytes);

void save_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::kF64);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace efaseg
