// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "efaseg/model.hpp"

#include <set>

#include "efaseg/error.hpp"
#include "efaseg/ops.hpp"

namespace efaseg {

ModelConfig ModelConfig::nano() { return ModelConfig{}; }

ModelConfig ModelConfig::micro() {
  ModelConfig cfg;
  cfg.name = "micro";
  for (auto& c : cfg.stage_channels) c *= 2;
  return cfg;
}

ModelConfig ModelConfig::named(const std::string& name) {
  if (name == "nano") return nano();
  if (name == "micro") return micro();
  throw ConfigError("unknown model preset '" + name + "' (expected nano or micro)");
}

void ModelConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be positive");
  for (int i = 0; i < 4; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (stage_depths[ui] < 0) throw ConfigError("stage depths must be >= 0");
    encoder_block(i + 1).attention.validate();
  }
  for (std::int64_t d : decoder_depths) {
    if (d < 0) throw ConfigError("decoder depths must be >= 0");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2, got " + std::to_string(num_classes));
  if (fusion_channels < 1) throw ConfigError("fusion_channels must be positive");
  if (expansion < 1) throw ConfigError("expansion must be positive");
  train_ratios.validate("training ratios");
}

void ModelConfig::validate_input(std::int64_t height, std::int64_t width) const {
  if (height < 32 || width < 32 || height % 32 != 0 || width % 32 != 0) {
    throw ConfigError("input extents must be multiples of 32 and at least 32, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
}

EftBlockConfig ModelConfig::encoder_block(int stage) const {
  const auto i = static_cast<std::size_t>(stage - 1);
  EftBlockConfig b;
  b.attention.channels = stage_channels[i];
  b.attention.heads = stage_heads[i];
  b.attention.train_ratio = train_ratios.encoder[i];
  b.attention.variant = variant;
  b.attention.pooling = pooling;
  b.attention.sr_projection = sr_projection;
  b.attention.bias_free = bias_free;
  b.expansion = expansion;
  return b;
}

EftBlockConfig ModelConfig::decoder_block(int dstage) const {
  const auto j = static_cast<std::size_t>(dstage - 1);
  EftBlockConfig b = encoder_block(kDecoderSourceStage[j]);
  b.attention.train_ratio = train_ratios.decoder[j];
  return b;
}

PatchEmbedConfig ModelConfig::patch_embed(int stage) const {
  const auto i = static_cast<std::size_t>(stage - 1);
  const std::int64_t in = stage == 1 ? in_channels : stage_channels[i - 1];
  return PatchEmbedConfig::for_stage(stage, in, stage_channels[i]);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <typename T, std::size_t N>
std::array<T, N> read_array(const nlohmann::json& v, const char* key) {
  if (!v.is_array() || v.size() != N) {
    throw ConfigError(std::string("model.") + key + " must be an array of " + std::to_string(N) + " integers");
  }
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number_integer()) throw ConfigError(std::string("model.") + key + " entries must be integers");
    out[i] = v[i].get<T>();
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const ModelConfig& cfg) {
  return nlohmann::json{
      {"name", cfg.name},
      {"in_channels", cfg.in_channels},
      {"stage_channels", cfg.stage_channels},
      {"stage_depths", cfg.stage_depths},
      {"stage_heads", cfg.stage_heads},
      {"decoder_depths", cfg.decoder_depths},
      {"num_classes", cfg.num_classes},
      {"fusion_channels", cfg.fusion_channels},
      {"expansion", cfg.expansion},
      {"variant", std::string(to_string(cfg.variant))},
      {"pooling", std::string(to_string(cfg.pooling))},
      {"sr_projection", cfg.sr_projection},
      {"bias_free", cfg.bias_free},
      {"train_ratios", format_ratios(cfg.train_ratios)},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("model section must be an object");
  // A preset name seeds the defaults; explicit keys override it.
  ModelConfig cfg = doc.contains("name") ? ModelConfig::named(doc.at("name").get<std::string>())
                                         : ModelConfig::nano();
  static const std::set<std::string> kKeys{
      "name",        "in_channels",     "stage_channels", "stage_depths", "stage_heads",
      "decoder_depths", "num_classes", "fusion_channels", "expansion",    "variant",
      "pooling",     "sr_projection",   "bias_free",      "train_ratios"};
  for (const auto& [key, value] : doc.items()) {
    if (!kKeys.contains(key)) throw ConfigError("unknown key 'model." + key + "'");
    try {
      if (key == "in_channels") cfg.in_channels = value.get<std::int64_t>();
      else if (key == "stage_channels") cfg.stage_channels = read_array<std::int64_t, 4>(value, "stage_channels");
      else if (key == "stage_depths") cfg.stage_depths = read_array<std::int64_t, 4>(value, "stage_depths");
      else if (key == "stage_heads") cfg.stage_heads = read_array<std::int64_t, 4>(value, "stage_heads");
      else if (key == "decoder_depths") cfg.decoder_depths = read_array<std::int64_t, 3>(value, "decoder_depths");
      else if (key == "num_classes") cfg.num_classes = value.get<std::int64_t>();
      else if (key == "fusion_channels") cfg.fusion_channels = value.get<std::int64_t>();
      else if (key == "expansion") cfg.expansion = value.get<std::int64_t>();
      else if (key == "variant") cfg.variant = parse_variant(value.get<std::string>());
      else if (key == "pooling") cfg.pooling = parse_pooling(value.get<std::string>());
      else if (key == "sr_projection") cfg.sr_projection = value.get<bool>();
      else if (key == "bias_free") cfg.bias_free = value.get<bool>();
      else if (key == "train_ratios") cfg.train_ratios = parse_ratios(value.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model." + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// weights

void ModelWeights::for_each(const ParamVisitor& visit) {
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const std::string stage = "enc" + std::to_string(i + 1) + ".";
    if (encoder[i].embed.kernel.defined()) encoder[i].embed.for_each(stage + "embed.", visit);
    for (std::size_t b = 0; b < encoder[i].blocks.size(); ++b) {
      encoder[i].blocks[b].for_each(stage + "block" + std::to_string(b) + ".", visit);
    }
  }
  for (std::size_t j = 0; j < decoder.size(); ++j) {
    const std::string stage = "dec" + std::to_string(j + 1) + ".";
    if (decoder[j].ln_gamma.defined()) visit(stage + "ln.gamma", decoder[j].ln_gamma);
    if (decoder[j].ln_beta.defined()) visit(stage + "ln.beta", decoder[j].ln_beta);
    for (std::size_t b = 0; b < decoder[j].blocks.size(); ++b) {
      decoder[j].blocks[b].for_each(stage + "block" + std::to_string(b) + ".", visit);
    }
  }
  if (fuse_w.defined()) visit("head.fuse.w", fuse_w);
  if (fuse_b.defined()) visit("head.fuse.b", fuse_b);
  if (cls_w.defined()) visit("head.cls.w", cls_w);
  if (cls_b.defined()) visit("head.cls.b", cls_b);
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model m{cfg, {}};
  for (int s = 1; s <= 4; ++s) {
    const auto i = static_cast<std::size_t>(s - 1);
    m.weights.encoder[i].embed = PatchEmbedWeights::init(cfg.patch_embed(s), rng);
    const EftBlockConfig bc = cfg.encoder_block(s);
    for (std::int64_t b = 0; b < cfg.stage_depths[i]; ++b) {
      m.weights.encoder[i].blocks.push_back(EftBlockWeights::init(bc, rng));
    }
  }
  std::int64_t concat = 0;
  for (int j = 1; j <= 3; ++j) {
    const auto uj = static_cast<std::size_t>(j - 1);
    const EftBlockConfig bc = cfg.decoder_block(j);
    auto& ds = m.weights.decoder[uj];
    ds.ln_gamma = ones_param({bc.channels()});
    ds.ln_beta = zeros_param({bc.channels()});
    for (std::int64_t b = 0; b < cfg.decoder_depths[uj]; ++b) ds.blocks.push_back(EftBlockWeights::init(bc, rng));
    concat += bc.channels();
  }
  m.weights.fuse_w = normal_param({concat, cfg.fusion_channels}, 0.02, rng);
  m.weights.fuse_b = zeros_param({cfg.fusion_channels});
  m.weights.cls_w = normal_param({cfg.fusion_channels, cfg.num_classes}, 0.02, rng);
  m.weights.cls_b = zeros_param({cfg.num_classes});
  return m;
}

std::int64_t count_parameters(ModelWeights& weights) {
  std::int64_t n = 0;
  weights.for_each([&](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

// ---------------------------------------------------------------------------
// forward

EncoderFeatures encoder_forward(const Tensor& image, const Model& model,
                                const std::array<std::int64_t, 4>& ratios) {
  const ModelConfig& cfg = model.config;
  if (image.rank() != 4 || image.dim(3) != cfg.in_channels) {
    throw DimensionError("image must be [b,H,W," + std::to_string(cfg.in_channels) + "], got " +
                         shape_str(image.shape()));
  }
  cfg.validate_input(image.dim(1), image.dim(2));
  EncoderFeatures features;
  Tensor x = image;
  for (int s = 1; s <= 4; ++s) {
    const auto i = static_cast<std::size_t>(s - 1);
    const auto& stage = model.weights.encoder[i];
    x = patch_embed_forward(x, cfg.patch_embed(s), stage.embed);
    const EftBlockConfig bc = cfg.encoder_block(s);
    for (const auto& block : stage.blocks) x = eft_block_forward(x, bc, block, ratios[i]);
    features[i] = x;
  }
  return features;
}

namespace {

std::array<Tensor, 3> decode_stages(const Tensor& f2, const Tensor& f3, const Tensor& f4,
                                    const Model& model, const std::array<std::int64_t, 3>& ratios) {
  const ModelConfig& cfg = model.config;
  if (f2.rank() != 4 || f3.rank() != 4 || f4.rank() != 4) {
    throw DimensionError("decoder features must be [b,h,w,c]");
  }
  if (f3.dim(1) * 2 != f2.dim(1) || f4.dim(1) * 4 != f2.dim(1) || f3.dim(0) != f2.dim(0) ||
      f4.dim(0) != f2.dim(0)) {
    throw DimensionError("decoder features have inconsistent extents: " + shape_str(f2.shape()) + ", " +
                         shape_str(f3.shape()) + ", " + shape_str(f4.shape()));
  }
  const std::array<const Tensor*, 3> inputs{&f4, &f3, &f2};
  std::array<Tensor, 3> out;
  for (int j = 1; j <= 3; ++j) {
    const auto uj = static_cast<std::size_t>(j - 1);
    const Tensor& feature = *inputs[uj];
    const EftBlockConfig bc = cfg.decoder_block(j);
    if (feature.rank() != 4 || feature.dim(3) != bc.channels()) {
      throw DimensionError("decoder stage " + std::to_string(j) + " expects " + std::to_string(bc.channels()) +
                           " channels, got " + shape_str(feature.shape()));
    }
    const auto& stage = model.weights.decoder[uj];
    // F̂_j = EFT(LN(F_i)) + F_i, with the stage's EFT blocks applied in turn.
    Tensor y = layer_norm(feature, stage.ln_gamma, stage.ln_beta, kLayerNormEps);
    for (const auto& block : stage.blocks) y = eft_block_forward(y, bc, block, ratios[uj]);
    out[uj] = add(y, feature);
  }
  return out;
}

}  // namespace

Tensor decoder_forward(const Tensor& f2, const Tensor& f3, const Tensor& f4, const Model& model,
                       const std::array<std::int64_t, 3>& ratios) {
  std::array<Tensor, 3> stages = decode_stages(f2, f3, f4, model, ratios);
  const std::int64_t h2 = f2.dim(1), w2 = f2.dim(2);
  std::vector<Tensor> upsampled;
  for (const Tensor& s : stages) upsampled.push_back(bilinear_upsample(s, h2, w2));
  Tensor fused = gelu(linear(concat_lastdim(upsampled), model.weights.fuse_w, model.weights.fuse_b));
  Tensor mask = linear(fused, model.weights.cls_w, model.weights.cls_b);
  return mask;
}

Tensor model_forward(const Tensor& image, const Model& model, const ReductionSchedule& schedule,
                     Phase phase) {
  const RatioSet r = effective_ratios(schedule, phase);
  EncoderFeatures f = encoder_forward(image, model, r.encoder);
  Tensor mask = decoder_forward(f[1], f[2], f[3], model, r.decoder);
  return bilinear_upsample(mask, image.dim(1), image.dim(2));
}

std::array<Tensor, 3> decoder_features(const Tensor& image, const Model& model,
                                       const ReductionSchedule& schedule, Phase phase) {
  const RatioSet r = effective_ratios(schedule, phase);
  EncoderFeatures f = encoder_forward(image, model, r.encoder);
  return decode_stages(f[1], f[2], f[3], model, r.decoder);
}

}  // namespace efaseg
