// Copyright 2026 The efaseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "efaseg/error.hpp"
#include "efaseg/flops.hpp"
#include "efaseg/isr.hpp"
#include "efaseg/sweep.hpp"

using namespace efaseg;

TEST_CASE("effective ratios") {
  ReductionSchedule s{RatioSet::default_training(), {{2, 2, 1, 1}, {2, 2, 2}}};
  const RatioSet r = effective_ratios(s, Phase::kInference);
  CHECK(r.encoder == std::array<std::int64_t, 4>{16, 8, 2, 1});
  CHECK(r.decoder == std::array<std::int64_t, 3>{2, 4, 8});
  CHECK(effective_ratios(s, Phase::kTrain) == RatioSet::default_training());
  const ReductionSchedule ones{RatioSet::default_training(), RatioSet::ones()};
  CHECK(effective_ratios(ones, Phase::kInference) == RatioSet::default_training());
  CHECK(ones.is_identity());
  ReductionSchedule bad = s;
  bad.multiplier.decoder[1] = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(effective_ratios(bad, Phase::kInference), ConfigError);
}

TEST_CASE("parsing") {
  const ReductionSchedule s = parse_schedule("[16,8,2,1]-[2,4,8]", RatioSet::default_training());
  CHECK(s.multiplier.encoder == std::array<std::int64_t, 4>{2, 2, 1, 1});
  CHECK(s.multiplier.decoder == std::array<std::int64_t, 3>{2, 2, 2});
  CHECK(format_schedule(s) == "[16,8,2,1]-[2,4,8]");
  CHECK(parse_ratios(" [ 1, 1,1 ,1 ] - [1,1,1] ") == RatioSet::ones());
  CHECK(parse_ratios(format_ratios(RatioSet::default_training())) == RatioSet::default_training());

  try {
    parse_ratios("[8,4]-[1]");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position() == 4);
  }
  CHECK_THROWS_AS(parse_ratios("[8,4,2,1]-[1,2,4"), ParseError);
  CHECK_THROWS_AS(parse_ratios("[8,4,2,1]-[1,2,4] x"), ParseError);
  CHECK_THROWS_AS(parse_ratios("[8,4,x,1]-[1,2,4]"), ParseError);
  CHECK_THROWS_AS(parse_ratios(""), ParseError);
  // below the training ratio, or not a whole multiple of it
  CHECK_THROWS_AS(parse_schedule("[4,4,2,1]-[1,2,4]", RatioSet::default_training()), ConfigError);
  CHECK_THROWS_AS(parse_schedule("[12,4,2,1]-[1,2,4]", RatioSet::default_training()), ConfigError);
}

TEST_CASE("reduction grid") {
  const auto grid = reduction_grid();
  REQUIRE(grid.size() == 20);
  CHECK(format_ratios(grid.front()) == "[8,4,2,1]-[1,2,4]");
  CHECK(format_ratios(grid[11]) == "[16,8,2,1]-[2,4,8]");
  CHECK(format_ratios(grid.back()) == "[16,8,4,2]-[2,4,8]");
  for (const RatioSet& r : grid) CHECK_NOTHROW(ReductionSchedule::factorize(RatioSet::default_training(), r));

  const auto listed = parse_schedule_list("# comment\n\n[8,4,2,1]-[1,2,4]\n  [16,8,2,1]-[2,4,8]  # best\n");
  REQUIRE(listed.size() == 2);
  CHECK(listed[1] == grid[11]);
  CHECK(parse_schedule_list("").empty());
}

TEST_CASE("attention MACs fall as any single multiplier rises") {
  const ModelConfig cfg = ModelConfig::nano();
  const RatioSet t = cfg.train_ratios;
  const double base = model_cost(cfg, cfg.training_schedule(), Phase::kTrain, 64, 64).attention_macs();
  for (std::size_t i = 0; i < 7; ++i) {
    double prev = base;
    for (std::int64_t a : {2, 4}) {
      ReductionSchedule s{t, RatioSet::ones()};
      if (i < 4) {
        s.multiplier.encoder[i] = a;
      } else {
        s.multiplier.decoder[i - 4] = a;
      }
      const double cur = model_cost(cfg, s, Phase::kInference, 64, 64).attention_macs();
      CHECK(cur <= prev);
      prev = cur;
    }
  }
}
