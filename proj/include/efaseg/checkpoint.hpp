// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "efaseg/harness.hpp"
#include "efaseg/model.hpp"

namespace efaseg {

struct Checkpoint {
  Model model;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  // Optimizer moments and sampler RNG, present for resumable checkpoints.
  std::optional<TrainState> train_state;
  // Free-form metadata (loss curve summary, options).
  nlohmann::json extra = nlohmann::json::object();
};

// Layout: "EFCK" | u64 LE header length | JSON header | tensor blobs.
// The header holds the model config, step, seed, RNG state and a manifest of
// {name, offset, length} entries; offsets are relative to the first blob.
// Every blob is one serialized tensor.
std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// 64-bit FNV-1a of a byte buffer / file, as 16 hex digits.
std::string digest(const std::vector<char>& bytes);
std::string file_digest(const std::filesystem::path& path);

}  // namespace efaseg
