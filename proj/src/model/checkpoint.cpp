// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "efaseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "efaseg/error.hpp"
#include "efaseg/serialize.hpp"

namespace efaseg {

namespace {

constexpr char kMagic[4] = {'E', 'F', 'C', 'K'};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

std::vector<NamedTensor> named_params(const Model& model) {
  Model view = model;  // shares tensors; for_each needs a mutable handle
  std::vector<NamedTensor> out;
  view.weights.for_each([&](const std::string& name, Tensor& t) { out.push_back({name, t}); });
  return out;
}

}  // namespace

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<NamedTensor> entries = named_params(ckpt.model);
  nlohmann::json header;
  header["format"] = 1;
  header["config"] = to_json(ckpt.model.config);
  header["step"] = ckpt.step;
  header["seed"] = ckpt.seed;
  header["extra"] = ckpt.extra;
  if (ckpt.train_state) {
    const TrainState& st = *ckpt.train_state;
    if (st.first_moment.size() != entries.size() || st.second_moment.size() != entries.size()) {
      throw UsageError("optimizer state does not match the model's parameters");
    }
    std::ostringstream rng;
    rng << st.rng;
    header["train_state"] = {{"step", st.step}, {"rng", rng.str()}};
    const std::size_t n = entries.size();
    for (std::size_t i = 0; i < n; ++i) {
      entries.push_back({"optim.m." + entries[i].name, st.first_moment[i]});
    }
    for (std::size_t i = 0; i < n; ++i) {
      entries.push_back({"optim.v." + entries[i].name, st.second_moment[i]});
    }
  }

  std::vector<char> blobs;
  nlohmann::json manifest = nlohmann::json::array();
  for (const NamedTensor& e : entries) {
    const std::vector<char> bytes = encode_tensor(e.tensor, DType::kF64);
    manifest.push_back({{"name", e.name}, {"offset", blobs.size()}, {"length", bytes.size()}});
    blobs.insert(blobs.end(), bytes.begin(), bytes.end());
  }
  header["manifest"] = std::move(manifest);

  const std::string text = header.dump();
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blobs.begin(), blobs.end());
  return out;
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("not a checkpoint (bad magic)");
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) {
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(4 + i)])) << (8 * i);
  }
  if (len > bytes.size() - 12) throw IoError("truncated checkpoint header");
  const std::size_t blob_start = 12 + static_cast<std::size_t>(len);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + static_cast<std::ptrdiff_t>(blob_start));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }

  std::map<std::string, Tensor> tensors;
  try {
    std::uint64_t cursor = 0;
    for (const auto& entry : header.at("manifest")) {
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto length = entry.at("length").get<std::uint64_t>();
      if (offset != cursor || length > bytes.size() - blob_start - offset) {
        throw IoError("checkpoint entry " + entry.at("name").get<std::string>() + " out of range");
      }
      cursor += length;
      const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(blob_start + offset);
      tensors[entry.at("name").get<std::string>()] =
          decode_tensor(std::vector<char>(first, first + static_cast<std::ptrdiff_t>(length)));
    }
    if (cursor != bytes.size() - blob_start) throw IoError("checkpoint has trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint manifest: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.model = Model::init(model_config_from_json(header.at("config")), 0);
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }

  auto take = [&](const std::string& name, const Shape& shape) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("checkpoint is missing tensor " + name);
    if (it->second.shape() != shape) {
      throw IoError("checkpoint tensor " + name + " has shape " + shape_str(it->second.shape()) +
                    ", expected " + shape_str(shape));
    }
    Tensor t = it->second;
    tensors.erase(it);
    return t;
  };

  ckpt.model.weights.for_each([&](const std::string& name, Tensor& t) {
    Tensor loaded = take(name, t.shape());
    loaded.set_requires_grad(true);
    t = loaded;
  });

  if (header.contains("train_state")) {
    TrainState st;
    st.step = header["train_state"].at("step").get<std::int64_t>();
    std::istringstream rng(header["train_state"].at("rng").get<std::string>());
    rng >> st.rng;
    if (!rng) throw IoError("corrupt RNG state in checkpoint");
    Model view = ckpt.model;
    view.weights.for_each([&](const std::string& name, Tensor& t) {
      st.first_moment.push_back(take("optim.m." + name, t.shape()));
      st.second_moment.push_back(take("optim.v." + name, t.shape()));
    });
    ckpt.train_state = std::move(st);
  }
  if (!tensors.empty()) throw IoError("checkpoint holds unknown tensor " + tensors.begin()->first);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<char> bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

std::string digest(const std::vector<char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string file_digest(const std::filesystem::path& path) { return digest(read_file(path)); }

}  // namespace efaseg
