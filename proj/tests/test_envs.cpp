#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "minicot/envs.hpp"

#include <filesystem>
#include <set>

using namespace minicot;
using envs::ChainOp;
using envs::EnvConfig;
using envs::OpKind;
using envs::Problem;
using policy::PolicySpec;
using policy::Token;
using policy::Trajectory;

namespace {

EnvConfig small_config(std::uint64_t seed = 5) {
  EnvConfig cfg;
  cfg.modulus = 10;
  cfg.difficulty_mix = {{1, 5}, {3, 5}};
  cfg.seed = seed;
  return cfg;
}

Trajectory finished_trajectory(std::vector<Token> tokens) {
  Trajectory t;
  t.tokens = std::move(tokens);
  t.finished = true;
  return t;
}

}  // namespace

TEST_CASE("chain arithmetic folds modulo M") {
  CHECK(envs::apply_op(3, {OpKind::add, 4}, 10) == 7);
  CHECK(envs::apply_op(4, {OpKind::mul, 3}, 10) == 2);
  CHECK(envs::fold({{OpKind::mul, 3}, {OpKind::add, 5}}, 2, 10) == 1);
  CHECK(envs::fold({}, 8, 10) == 8);
  CHECK(envs::fold({{OpKind::add, 9}, {OpKind::add, 9}}, 9, 10) == 7);
}

TEST_CASE("config validation enforces the token layout") {
  PolicySpec spec;
  CHECK_NOTHROW(small_config().validate(spec));

  auto bad = small_config();
  bad.modulus = 1;
  CHECK_THROWS_AS(bad.validate(spec), std::invalid_argument);

  bad = small_config();
  bad.modulus = 11;  // 11 values + 4 ops + marker + stop = 17 > 16
  CHECK_THROWS_AS(bad.validate(spec), std::invalid_argument);

  bad = small_config();
  bad.difficulty_mix = {{0, 3}};
  CHECK_THROWS_AS(bad.validate(spec), std::invalid_argument);

  bad = small_config();
  bad.difficulty_mix = {{2, -1}};
  CHECK_THROWS_AS(bad.validate(spec), std::invalid_argument);

  bad = small_config();
  bad.op_set.clear();
  CHECK_THROWS_AS(bad.validate(spec), std::invalid_argument);
}

TEST_CASE("generation matches the requested difficulty mix") {
  PolicySpec spec;
  const auto problems = envs::generate_problem_set(small_config(), spec);
  REQUIRE(problems.size() == 10);
  int d1 = 0, d3 = 0;
  for (const auto& p : problems) {
    if (p.difficulty == 1) ++d1;
    if (p.difficulty == 3) ++d3;
  }
  CHECK(d1 == 5);
  CHECK(d3 == 5);

  std::set<std::int64_t> ids;
  for (const auto& p : problems) ids.insert(p.id);
  CHECK(ids.size() == 10);
  CHECK(*ids.begin() == 0);
  CHECK(*ids.rbegin() == 9);
}

TEST_CASE("generated problems are internally consistent") {
  PolicySpec spec;
  const auto cfg = small_config();
  for (const auto& p : envs::generate_problem_set(cfg, spec)) {
    CHECK(static_cast<int>(p.ops.size()) == p.difficulty);
    CHECK(p.op_tokens.size() == p.ops.size());
    REQUIRE(p.prompt_tokens.size() == p.ops.size() + 1);
    CHECK(p.prompt_tokens.back() == p.start_value);
    CHECK(p.start_value >= 0);
    CHECK(p.start_value < cfg.modulus);
    for (Token t : p.op_tokens) {
      CHECK(t >= p.op_lo);
      CHECK(t < p.op_hi);
    }
    REQUIRE(p.ground_truth.size() == 1);
    CHECK(p.ground_truth[0] == envs::fold(p.ops, p.start_value, p.modulus));
    CHECK(p.answer_marker == spec.answer_marker);
    CHECK(p.stop_token == spec.stop_token);
  }
}

TEST_CASE("generation is deterministic in the seed and varies across seeds") {
  PolicySpec spec;
  const auto a = envs::generate_problem_set(small_config(5), spec);
  const auto b = envs::generate_problem_set(small_config(5), spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].start_value == b[i].start_value);
    CHECK(a[i].ops == b[i].ops);
  }

  const auto c = envs::generate_problem_set(small_config(6), spec);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    any_diff = any_diff || a[i].start_value != c[i].start_value || a[i].ops != c[i].ops;
  CHECK(any_diff);
}

TEST_CASE("the honest derivation earns reward 1 on every generated problem") {
  PolicySpec spec;
  auto cfg = small_config(41);
  cfg.difficulty_mix = {{1, 4}, {2, 4}, {4, 4}};
  for (const auto& p : envs::generate_problem_set(cfg, spec)) {
    const auto witness = p.witness_tokens(spec);
    CHECK(static_cast<int>(witness.size()) == 2 * p.difficulty + 3);
    CHECK(envs::verify(p, finished_trajectory(witness)) == 1);
  }
}

TEST_CASE("verify accepts only a finished, well-formed, correct answer") {
  PolicySpec spec;
  auto cfg = small_config(8);
  cfg.difficulty_mix = {{2, 1}};
  const auto p = envs::generate_problem_set(cfg, spec)[0];
  const Token good = p.ground_truth[0];
  const Token other = static_cast<Token>((good + 1) % p.modulus);
  const Token marker = spec.answer_marker;
  const Token stop = spec.stop_token;

  CHECK(envs::verify(p, finished_trajectory({marker, good, stop})) == 1);
  CHECK(envs::verify(p, finished_trajectory({marker, other, stop})) == 0);

  // Unfinished trajectories score 0 even with the right tokens.
  Trajectory truncated;
  truncated.tokens = {marker, good, stop};
  truncated.finished = false;
  CHECK(envs::verify(p, truncated) == 0);

  CHECK(envs::verify(p, finished_trajectory({good, stop})) == 0);                 // no marker
  CHECK(envs::verify(p, finished_trajectory({marker, good, marker, stop})) == 0); // two markers
  CHECK(envs::verify(p, finished_trajectory({marker, stop})) == 0);               // empty answer
  CHECK(envs::verify(p, finished_trajectory({marker, good, other, stop})) == 0);  // extra token

  // Same inputs, same output: verify is pure.
  const auto t = finished_trajectory({marker, good, stop});
  CHECK(envs::verify(p, t) == envs::verify(p, t));
}

TEST_CASE("guesses are uniform over the answer space and seed-reproducible") {
  PolicySpec spec;
  auto cfg = small_config(12);
  cfg.difficulty_mix = {{1, 1}};
  const auto p = envs::generate_problem_set(cfg, spec)[0];

  auto r1 = rng::stream(7, {rng::CURATION_GUESS, 0});
  auto r2 = rng::stream(7, {rng::CURATION_GUESS, 0});
  std::vector<int> counts(p.modulus, 0);
  for (int i = 0; i < 10000; ++i) {
    const Token g1 = envs::guess_answer(p, r1);
    CHECK(g1 == envs::guess_answer(p, r2));
    REQUIRE(g1 >= 0);
    REQUIRE(g1 < p.modulus);
    ++counts[g1];
  }
  // Binomial(10000, 1/10) has sd ~30; +-150 is a 5-sigma band.
  for (int c : counts) {
    CHECK(c > 850);
    CHECK(c < 1150);
  }
}

TEST_CASE("problem sets round-trip through files") {
  PolicySpec spec;
  auto cfg = small_config(23);
  cfg.difficulty_mix = {{1, 2}, {3, 2}};
  const auto problems = envs::generate_problem_set(cfg, spec);
  const auto path = std::filesystem::temp_directory_path() / "minicot_envs_test.problems";
  envs::save_problem_set(problems, path.string());
  const auto loaded = envs::load_problem_set(path.string());
  std::filesystem::remove(path);

  REQUIRE(loaded.size() == problems.size());
  for (std::size_t i = 0; i < problems.size(); ++i) {
    CHECK(loaded[i].id == problems[i].id);
    CHECK(loaded[i].modulus == problems[i].modulus);
    CHECK(loaded[i].start_value == problems[i].start_value);
    CHECK(loaded[i].ops == problems[i].ops);
    CHECK(loaded[i].op_tokens == problems[i].op_tokens);
    CHECK(loaded[i].prompt_tokens == problems[i].prompt_tokens);
    CHECK(loaded[i].ground_truth == problems[i].ground_truth);
    CHECK(loaded[i].difficulty == problems[i].difficulty);
    CHECK(loaded[i].domain_tag == problems[i].domain_tag);
    CHECK(loaded[i].op_lo == problems[i].op_lo);
    CHECK(loaded[i].op_hi == problems[i].op_hi);
    CHECK(loaded[i].answer_marker == problems[i].answer_marker);
    CHECK(loaded[i].stop_token == problems[i].stop_token);
  }
  CHECK_THROWS_AS(envs::load_problem_set("/nonexistent/minicot.problems"), std::runtime_error);
}

TEST_CASE("feature digests expose fold-vs-next structure shared across problems") {
  PolicySpec spec;
  auto cfg = small_config(31);
  cfg.difficulty_mix = {{2, 6}};
  const auto problems = envs::generate_problem_set(cfg, spec);

  const auto& a = problems[0];
  const auto ctx_a = a.context();

  // Right after emitting any op token the digest is one shared constant.
  const std::vector<Token> after_op = {a.op_tokens[0]};
  const std::vector<Token> after_other_op = {a.op_tokens[1]};
  CHECK(ctx_a.feature_digest(after_op) == ctx_a.feature_digest(after_other_op));

  // That constant is shared across problems, so fold rules generalize.
  const auto& b = problems[1];
  const std::vector<Token> b_after_op = {b.op_tokens[0]};
  CHECK(ctx_a.feature_digest(after_op) == b.context().feature_digest(b_after_op));

  // Before emitting anything, the digest names the first op; problems with
  // different first ops get different digests.
  bool found_different_first = false;
  for (const auto& other : problems) {
    if (other.op_tokens[0] == a.op_tokens[0]) {
      CHECK(other.context().feature_digest({}) == ctx_a.feature_digest({}));
    } else {
      CHECK(other.context().feature_digest({}) != ctx_a.feature_digest({}));
      found_different_first = true;
    }
  }
  CHECK(found_different_first);

  // After echoing both ops (values in between), the digest says "done" and
  // no longer depends on which ops they were.
  const std::vector<Token> all_consumed = {a.op_tokens[0], 1, a.op_tokens[1], 2};
  const std::vector<Token> b_all_consumed = {b.op_tokens[0], 3, b.op_tokens[1], 4};
  CHECK(ctx_a.feature_digest(all_consumed) == b.context().feature_digest(b_all_consumed));
  CHECK(ctx_a.feature_digest(all_consumed) != ctx_a.feature_digest(after_op));
}
