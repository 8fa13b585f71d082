// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cctype>
#include <sstream>

#include "efaseg/error.hpp"
#include "efaseg/isr.hpp"

namespace efaseg {

void RatioSet::validate(std::string_view what) const {
  for (std::int64_t v : encoder) {
    if (v < 1) throw ConfigError(std::string(what) + ": ratios must be >= 1, got " + format_ratios(*this));
  }
  for (std::int64_t v : decoder) {
    if (v < 1) throw ConfigError(std::string(what) + ": ratios must be >= 1, got " + format_ratios(*this));
  }
}

namespace {

class RatioParser {
 public:
  explicit RatioParser(std::string_view text) : text_(text) {}

  RatioSet parse() {
    RatioSet out;
    list(out.encoder.data(), out.encoder.size(), "encoder");
    skip_space();
    expect('-');
    list(out.decoder.data(), out.decoder.size(), "decoder");
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters after schedule");
    return out;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

  void expect(char c) {
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::int64_t integer() {
    skip_space();
    const std::size_t start = pos_;
    std::int64_t v = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      v = v * 10 + (text_[pos_] - '0');
      if (v > 1'000'000) fail("ratio too large");
      ++pos_;
    }
    if (pos_ == start) fail("expected a non-negative integer");
    return v;
  }

  void list(std::int64_t* out, std::size_t arity, const char* what) {
    skip_space();
    expect('[');
    for (std::size_t i = 0; i < arity; ++i) {
      if (i) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == ']') {
          fail(std::string("expected ") + std::to_string(arity) + " " + what + " ratios, got " +
               std::to_string(i));
        }
        expect(',');
      }
      out[i] = integer();
    }
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ',') {
      fail(std::string("expected ") + std::to_string(arity) + " " + what + " ratios, got more");
    }
    expect(']');
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

RatioSet parse_ratios(std::string_view text) { return RatioParser(text).parse(); }

std::string format_ratios(const RatioSet& r) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < r.encoder.size(); ++i) out << (i ? "," : "") << r.encoder[i];
  out << "]-[";
  for (std::size_t i = 0; i < r.decoder.size(); ++i) out << (i ? "," : "") << r.decoder[i];
  out << ']';
  return out.str();
}

void ReductionSchedule::validate() const {
  train.validate("training ratios");
  multiplier.validate("inference multipliers");
}

ReductionSchedule ReductionSchedule::factorize(const RatioSet& train, const RatioSet& effective) {
  train.validate("training ratios");
  effective.validate("inference ratios");
  ReductionSchedule s{train, RatioSet::ones()};
  auto split = [&](std::int64_t t, std::int64_t r, std::int64_t& a) {
    if (r % t != 0 || r < t) {
      throw ConfigError("inference ratio " + std::to_string(r) + " is not a whole multiple of training ratio " +
                        std::to_string(t) + " (" + format_ratios(effective) + " vs " + format_ratios(train) + ")");
    }
    a = r / t;
  };
  for (std::size_t i = 0; i < 4; ++i) split(train.encoder[i], effective.encoder[i], s.multiplier.encoder[i]);
  for (std::size_t j = 0; j < 3; ++j) split(train.decoder[j], effective.decoder[j], s.multiplier.decoder[j]);
  return s;
}

RatioSet effective_ratios(const ReductionSchedule& schedule, Phase phase) {
  schedule.validate();
  if (phase == Phase::kTrain) return schedule.train;
  RatioSet r;
  for (std::size_t i = 0; i < 4; ++i) r.encoder[i] = schedule.train.encoder[i] * schedule.multiplier.encoder[i];
  for (std::size_t j = 0; j < 3; ++j) r.decoder[j] = schedule.train.decoder[j] * schedule.multiplier.decoder[j];
  return r;
}

ReductionSchedule parse_schedule(std::string_view text, const RatioSet& train) {
  return ReductionSchedule::factorize(train, parse_ratios(text));
}

std::string format_schedule(const ReductionSchedule& schedule) {
  return format_ratios(effective_ratios(schedule, Phase::kInference));
}

}  // namespace efaseg
