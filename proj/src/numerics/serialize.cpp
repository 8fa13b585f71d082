// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "efaseg/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "efaseg/error.hpp"

namespace efaseg {
namespace {

constexpr char kMagic[4] = {'E', 'F', 'T', '1'};
constexpr std::uint8_t kMaxRank = 16;

template <typename U>
void put_le(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw IoError("truncated tensor stream");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t, DType dtype) {
  out.write(kMagic, 4);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (std::int64_t e : t.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
  for (double v : t.data()) {
    if (dtype == DType::kF64) {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    } else {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  if (!out) throw IoError("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad tensor magic");
  const auto tag = get_le<std::uint8_t>(in);
  if (tag > 1) throw IoError("unknown tensor dtype tag " + std::to_string(tag));
  const auto rank = get_le<std::uint8_t>(in);
  if (rank == 0 || rank > kMaxRank) throw IoError("unsupported tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) {
    const auto v = get_le<std::uint64_t>(in);
    if (v == 0 || v > (1ULL << 40)) throw IoError("invalid tensor extent");
    e = static_cast<std::int64_t>(v);
  }
  std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
  for (double& v : values) {
    v = tag == 1 ? std::bit_cast<double>(get_le<std::uint64_t>(in))
                 : static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in)));
  }
  return Tensor::from(std::move(shape), std::move(values));
}

std::vector<char> encode_tensor(const Tensor& t, DType dtype) {
  std::ostringstream out(std::ios::binary);
  write_tensor(out, t, dtype);
  const std::string s = out.str();
  return {s.begin(), s.end()};
}

Tensor decode_tensor(const std::vector<char>& bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  return read_tensor(in);
}

void save_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(out, t, dtype);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace efaseg
