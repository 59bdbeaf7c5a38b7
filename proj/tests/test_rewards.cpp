#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "minicot/rewards.hpp"
#include "minicot/rng.hpp"

#include <stdexcept>

using namespace minicot;
using rewards::LengthPenaltyConfig;
using rewards::LengthSample;

TEST_CASE("config validation") {
  CHECK_NOTHROW(LengthPenaltyConfig{}.validate());
  LengthPenaltyConfig bad;
  bad.weight = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = LengthPenaltyConfig{};
  bad.warmup_iterations = -5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = LengthPenaltyConfig{};
  bad.repeat_penalty = 0.25;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("length rewards interpolate between +0.5 and -0.5") {
  const auto r = rewards::length_rewards({{100, true}, {200, true}, {300, true}});
  REQUIRE(r.size() == 3);
  CHECK(r[0] == doctest::Approx(0.5));
  CHECK(r[1] == doctest::Approx(0.0));
  CHECK(r[2] == doctest::Approx(-0.5));
}

TEST_CASE("incorrect samples never earn a positive length reward") {
  const auto r = rewards::length_rewards({{100, false}, {300, false}});
  CHECK(r[0] == doctest::Approx(0.0));   // min(0, +0.5)
  CHECK(r[1] == doctest::Approx(-0.5));  // min(0, -0.5)

  const auto mixed = rewards::length_rewards({{10, false}, {20, true}, {30, false}});
  CHECK(mixed[0] == doctest::Approx(0.0));
  CHECK(mixed[1] == doctest::Approx(0.0));
  CHECK(mixed[2] == doctest::Approx(-0.5));
}

TEST_CASE("equal lengths yield zero for every sample") {
  const auto r = rewards::length_rewards({{42, true}, {42, false}, {42, true}});
  for (double v : r) CHECK(v == 0.0);
  const auto single = rewards::length_rewards({{7, true}});
  CHECK(single[0] == 0.0);
}

TEST_CASE("length rewards stay in range and are anti-monotone for correct samples") {
  std::vector<LengthSample> samples;
  auto rng = rng::Rng{0};
  for (int i = 0; i < 40; ++i)
    samples.push_back({1 + static_cast<int>(rng.uniform(60)), rng.uniform(2) == 0});
  const auto r = rewards::length_rewards(samples);
  for (double v : r) {
    CHECK(v >= -0.5);
    CHECK(v <= 0.5);
  }
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = 0; j < samples.size(); ++j)
      if (samples[i].correct && samples[j].correct && samples[i].length < samples[j].length)
        CHECK(r[i] >= r[j]);
}

TEST_CASE("length rewards are shift-invariant in the lengths") {
  std::vector<LengthSample> base = {{5, true}, {9, false}, {14, true}};
  auto shifted = base;
  for (auto& s : shifted) s.length += 100;
  const auto a = rewards::length_rewards(base);
  const auto b = rewards::length_rewards(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]));
}

TEST_CASE("rejects empty groups and non-positive lengths") {
  CHECK_THROWS_AS(rewards::length_rewards({}), std::invalid_argument);
  CHECK_THROWS_AS(rewards::length_rewards({{0, true}}), std::invalid_argument);
}

TEST_CASE("warm-up is a hard step at warmup_iterations") {
  LengthPenaltyConfig cfg;
  cfg.warmup_iterations = 10;
  CHECK(rewards::warmup_scale(0, cfg) == 0.0);
  CHECK(rewards::warmup_scale(9, cfg) == 0.0);
  CHECK(rewards::warmup_scale(10, cfg) == 1.0);
  CHECK(rewards::warmup_scale(500, cfg) == 1.0);

  LengthPenaltyConfig off;
  off.warmup_iterations = 0;
  CHECK(rewards::warmup_scale(0, off) == 1.0);
  CHECK_THROWS_AS(rewards::warmup_scale(-1, off), std::invalid_argument);
}

TEST_CASE("combined reward adds the weighted pieces") {
  LengthPenaltyConfig cfg;
  cfg.weight = 1.0;
  cfg.warmup_iterations = 0;
  cfg.repeat_penalty = -0.5;
  CHECK(rewards::combined_reward(1, 0.5, false, 0, cfg) == doctest::Approx(1.5));
  CHECK(rewards::combined_reward(0, 0.0, true, 0, cfg) == doctest::Approx(-0.5));
  CHECK(rewards::combined_reward(1, -0.5, true, 0, cfg) == doctest::Approx(0.0));

  // During warm-up the base reward passes through untouched.
  cfg.warmup_iterations = 100;
  CHECK(rewards::combined_reward(1, -0.5, false, 50, cfg) == doctest::Approx(1.0));
  CHECK(rewards::combined_reward(0, 0.5, false, 99, cfg) == doctest::Approx(0.0));

  // The weight scales only the length term.
  cfg.warmup_iterations = 0;
  cfg.weight = 0.4;
  CHECK(rewards::combined_reward(1, 0.5, false, 0, cfg) == doctest::Approx(1.2));
}
