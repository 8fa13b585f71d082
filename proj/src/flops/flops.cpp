// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "efaseg/flops.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "efaseg/error.hpp"

namespace efaseg {

Cost FlopReport::total() const {
  Cost t;
  t += qkv_embedding;
  t += global_functioning;
  t += output_projection;
  t += others;
  return t;
}

FlopReport& FlopReport::operator+=(const FlopReport& o) {
  qkv_embedding += o.qkv_embedding;
  global_functioning += o.global_functioning;
  output_projection += o.output_projection;
  others += o.others;
  return *this;
}

namespace {

void require_positive(std::int64_t v, const char* what) {
  if (v < 1) throw ConfigError(std::string(what) + " must be positive, got " + std::to_string(v));
}

// Shared assembly once token counts and pooled-member counts are known.
FlopReport assemble(double tokens, double reduced, double pooled_members, std::int64_t c,
                    AttentionVariant variant, bool sr_projection, bool bias_free) {
  const double cd = static_cast<double>(c);
  const std::int64_t linear_params = c * c + (bias_free ? 0 : c);
  FlopReport r;
  if (variant == AttentionVariant::kEmbedded) {
    r.qkv_embedding = {tokens * cd * cd + 2.0 * reduced * cd * cd, 3 * linear_params};
  }
  r.global_functioning = {2.0 * tokens * reduced * cd, 0};
  r.output_projection = {tokens * cd * cd, linear_params};
  r.others.macs = pooled_members * cd;
  if (sr_projection) {
    // Projection of the reduced tokens plus the scaling multiply of its norm.
    r.others.macs += reduced * cd * cd + reduced * cd;
    r.others.params = linear_params;
  }
  return r;
}

// Sum over output windows of their in-bounds member count along one axis.
std::int64_t axis_members(std::int64_t extent, std::int64_t ratio, std::int64_t kernel) {
  std::int64_t total = 0;
  for (std::int64_t start = 0; start < extent; start += ratio) total += std::min(extent, start + kernel) - start;
  return total;
}

}  // namespace

FlopReport attention_cost(std::int64_t hw, std::int64_t channels, std::int64_t ratio,
                          std::int64_t multiplier, AttentionVariant variant, bool sr_projection,
                          bool bias_free) {
  require_positive(hw, "token count");
  require_positive(channels, "channels");
  require_positive(ratio, "reduction ratio");
  require_positive(multiplier, "inference multiplier");
  const double eff = static_cast<double>(ratio * multiplier);
  const double tokens = static_cast<double>(hw);
  const double reduced = tokens / (eff * eff);
  const double pooled = ratio * multiplier > 1 ? tokens : 0.0;
  return assemble(tokens, reduced, pooled, channels, variant, sr_projection, bias_free);
}

FlopReport attention_cost_grid(std::int64_t height, std::int64_t width, const AttentionConfig& cfg,
                               std::int64_t ratio, std::int64_t multiplier) {
  require_positive(height, "height");
  require_positive(width, "width");
  require_positive(ratio, "reduction ratio");
  require_positive(multiplier, "inference multiplier");
  cfg.validate();
  const std::int64_t eff = ratio * multiplier;
  const auto rh = (height + eff - 1) / eff, rw = (width + eff - 1) / eff;
  double members = 0.0;
  if (eff > 1) {
    const std::int64_t kernel = cfg.pooling == Pooling::kOverlapped ? eff + 1 : eff;
    members = static_cast<double>(axis_members(height, eff, kernel) * axis_members(width, eff, kernel));
  }
  return assemble(static_cast<double>(height * width), static_cast<double>(rh * rw), members, cfg.channels,
                  cfg.variant, cfg.sr_projection, cfg.bias_free);
}

Cost ModelCostReport::total() const {
  Cost t = attention.total();
  t += other;
  return t;
}

namespace {

Cost block_other_cost(std::int64_t tokens, std::int64_t height, std::int64_t width, const EftBlockConfig& bc) {
  const std::int64_t c = bc.channels();
  const std::int64_t hidden = c * bc.expansion;
  Cost cost;
  // Two pre-norms.
  cost.macs += 2.0 * static_cast<double>(tokens * c);
  cost.params += 4 * c;
  // FFL: linear, depthwise 3×3, linear.
  cost.macs += static_cast<double>(tokens * c * hidden) + static_cast<double>(height * width * 9 * hidden) +
               static_cast<double>(tokens * hidden * c);
  cost.params += c * hidden + hidden + 9 * hidden + hidden + hidden * c + c;
  return cost;
}

}  // namespace

ModelCostReport model_cost(const ModelConfig& cfg, const ReductionSchedule& schedule, Phase phase,
                           std::int64_t height, std::int64_t width) {
  cfg.validate();
  cfg.validate_input(height, width);
  const RatioSet ratios = effective_ratios(schedule, phase);
  const RatioSet& train = schedule.train;
  ModelCostReport report;
  std::array<std::int64_t, 4> fh{}, fw{};
  std::int64_t h = height, w = width;
  for (int s = 1; s <= 4; ++s) {
    const auto i = static_cast<std::size_t>(s - 1);
    const PatchEmbedConfig pe = cfg.patch_embed(s);
    h = pe.output_extent(h);
    w = pe.output_extent(w);
    fh[i] = h;
    fw[i] = w;
    StageCost stage{"enc" + std::to_string(s), {}, {}};
    const std::int64_t tokens = h * w;
    stage.other.macs += static_cast<double>(tokens * pe.kernel * pe.kernel * pe.in_channels * pe.out_channels) +
                        static_cast<double>(tokens * pe.out_channels);
    stage.other.params += pe.kernel * pe.kernel * pe.in_channels * pe.out_channels + 3 * pe.out_channels;
    const EftBlockConfig bc = cfg.encoder_block(s);
    const std::int64_t a = ratios.encoder[i] / train.encoder[i];
    for (std::int64_t b = 0; b < cfg.stage_depths[i]; ++b) {
      stage.attention += attention_cost_grid(h, w, bc.attention, train.encoder[i], a);
      stage.other += block_other_cost(tokens, h, w, bc);
    }
    report.stages.push_back(stage);
  }
  std::int64_t concat = 0;
  for (int j = 1; j <= 3; ++j) {
    const auto uj = static_cast<std::size_t>(j - 1);
    const auto src = static_cast<std::size_t>(kDecoderSourceStage[uj] - 1);
    const EftBlockConfig bc = cfg.decoder_block(j);
    const std::int64_t c = bc.channels();
    const std::int64_t tokens = fh[src] * fw[src];
    StageCost stage{"dec" + std::to_string(j), {}, {}};
    stage.other.macs += static_cast<double>(tokens * c);
    stage.other.params += 2 * c;
    const std::int64_t a = ratios.decoder[uj] / train.decoder[uj];
    for (std::int64_t b = 0; b < cfg.decoder_depths[uj]; ++b) {
      stage.attention += attention_cost_grid(fh[src], fw[src], bc.attention, train.decoder[uj], a);
      stage.other += block_other_cost(tokens, fh[src], fw[src], bc);
    }
    concat += c;
    report.stages.push_back(stage);
  }
  StageCost head{"head", {}, {}};
  const std::int64_t fused_tokens = fh[1] * fw[1];
  head.other.macs = static_cast<double>(fused_tokens * concat * cfg.fusion_channels) +
                    static_cast<double>(fused_tokens * cfg.fusion_channels * cfg.num_classes);
  head.other.params = concat * cfg.fusion_channels + cfg.fusion_channels +
                      cfg.fusion_channels * cfg.num_classes + cfg.num_classes;
  report.stages.push_back(head);
  for (const StageCost& s : report.stages) {
    report.attention += s.attention;
    report.other += s.other;
  }
  report.attention.label = "model";
  return report;
}

std::vector<FlopReport> appendix_b_reports() {
  constexpr std::int64_t kTokens = 14 * 14, kChannels = 128, kRatio = 2;
  FlopReport sra = attention_cost(kTokens, kChannels, kRatio, 1, AttentionVariant::kEmbedded, true, false);
  sra.label = "SRA";
  FlopReport efa = attention_cost(kTokens, kChannels, kRatio, 1, AttentionVariant::kEmbeddingFree, true, false);
  efa.label = "EFA w/o ISR";
  FlopReport isr = attention_cost(kTokens, kChannels, kRatio, 2, AttentionVariant::kEmbeddingFree, true, false);
  isr.label = "EFA w/ ISR";
  return {sra, efa, isr};
}

std::string format_fixed(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // Nudge by a relative epsilon so exact decimal halves round up despite
  // binary representation.
  const double scaled = value * scale;
  const double rounded = std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, std::abs(scaled)));
  std::ostringstream out;
  out << std::fixed << std::setprecision(decimals) << rounded / scale;
  return out.str();
}

namespace {

std::string mflops(double macs) { return format_fixed(macs / 1e6, 2); }
std::string kparams(std::int64_t params) { return format_fixed(static_cast<double>(params) / 1e3, 1); }

// Percent change of the displayed value against the displayed baseline.
std::string delta(const std::string& shown, const std::string& baseline_shown) {
  const double base = std::stod(baseline_shown);
  if (base == 0.0) return "";
  const double pct = (std::stod(shown) / base - 1.0) * 100.0;
  std::string s = format_fixed(std::abs(pct), 1);
  return std::string(" (") + (pct < 0 ? "-" : "+") + s + "%)";
}

}  // namespace

std::string render_table(const std::vector<FlopReport>& reports) {
  std::ostringstream out;
  const int label_w = 14, col_w = 9, total_w = 18;
  out << std::left << std::setw(label_w) << "Mechanism" << std::right;
  for (const char* h : {"QKV-MF", "QKV-KP", "Glob-MF", "Glob-KP", "Out-MF", "Out-KP", "Oth-MF", "Oth-KP"}) {
    out << std::setw(col_w) << h;
  }
  out << std::setw(total_w) << "Total-MFLOPs" << std::setw(total_w) << "Total-Params(K)" << '\n';
  std::string base_m, base_k;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const FlopReport& r = reports[i];
    out << std::left << std::setw(label_w) << r.label << std::right;
    for (const Cost* c : {&r.qkv_embedding, &r.global_functioning, &r.output_projection, &r.others}) {
      out << std::setw(col_w) << mflops(c->macs) << std::setw(col_w) << kparams(c->params);
    }
    const Cost t = r.total();
    const std::string m = mflops(t.macs), k = kparams(t.params);
    if (i == 0) {
      base_m = m;
      base_k = k;
      out << std::setw(total_w) << m << std::setw(total_w) << k << '\n';
    } else {
      out << std::setw(total_w) << m + delta(m, base_m) << std::setw(total_w) << k + delta(k, base_k) << '\n';
    }
  }
  return out.str();
}

nlohmann::json to_json(const FlopReport& r) {
  auto cost = [](const Cost& c) { return nlohmann::json{{"macs", c.macs}, {"params", c.params}}; };
  return nlohmann::json{{"label", r.label},
                        {"qkv_embedding", cost(r.qkv_embedding)},
                        {"global_functioning", cost(r.global_functioning)},
                        {"output_projection", cost(r.output_projection)},
                        {"others", cost(r.others)},
                        {"total", cost(r.total())}};
}

}  // namespace efaseg
