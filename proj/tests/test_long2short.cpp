#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "minicot/long2short.hpp"

#include <algorithm>
#include <cmath>

#include "minicot/rollout.hpp"

using namespace minicot;
using envs::Problem;
using long2short::DpoPair;
using long2short::Long2ShortConfig;
using long2short::SftExample;
using policy::ParamVector;
using policy::PolicySpec;
using policy::Token;
using policy::Trajectory;

namespace {

PolicySpec tiny_spec() {
  PolicySpec spec;
  spec.vocab_size = 3;
  spec.context_width = 3;
  spec.answer_marker = 1;
  spec.stop_token = 2;
  return spec;
}

Problem tiny_problem() {
  Problem p;
  p.id = 0;
  p.modulus = 1;
  p.start_value = 0;
  p.prompt_tokens = {0};
  p.ground_truth = {0};
  p.difficulty = 1;
  p.op_lo = 1;
  p.op_hi = 1;
  p.answer_marker = 1;
  p.stop_token = 2;
  return p;
}

Trajectory traj_of(std::vector<Token> tokens) {
  Trajectory t;
  t.tokens = std::move(tokens);
  return t;
}

Trajectory make_len(std::size_t len, bool correct_shape = false) {
  // Arbitrary filler whose only meaningful property is its length; the
  // correctness flag travels separately.
  std::vector<Token> tokens(len, 0);
  if (correct_shape && len >= 3) {
    tokens[len - 3] = 1;
    tokens[len - 1] = 2;
  }
  return traj_of(std::move(tokens));
}

/// Plant a near-deterministic path through the tiny world.
void script_path(ParamVector& params, const PolicySpec& spec, const policy::ProblemContext& ctx,
                 const std::vector<Token>& tokens, double logit) {
  std::vector<Token> prefix;
  for (Token t : tokens) {
    params.set(policy::context_key(spec, ctx, prefix), t, logit);
    prefix.push_back(t);
  }
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(Long2ShortConfig{}.validate());
  Long2ShortConfig bad;
  bad.srs_samples = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = Long2ShortConfig{};
  bad.dpo_length_ratio = 1.0;  // must be strictly > 1
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = Long2ShortConfig{};
  bad.dpo_beta = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = Long2ShortConfig{};
  bad.short_budget = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = Long2ShortConfig{};
  bad.merge_weight = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("merging averages logits with the configured weight") {
  const auto spec = tiny_spec();
  ParamVector a(spec.vocab_size), b(spec.vocab_size);
  a.set(3, 0, 2.0);
  b.set(3, 0, 4.0);
  b.set(9, 1, 1.0);  // only in b: union rule treats a's row as zero
  Long2ShortConfig cfg;
  cfg.merge_weight = 0.25;
  const auto merged = long2short::merge_policies(a, b, cfg);
  CHECK(merged.logit(3, 0) == doctest::Approx(0.25 * 2.0 + 0.75 * 4.0));
  CHECK(merged.logit(9, 1) == doctest::Approx(0.75));
}

TEST_CASE("shortest rejection sampling returns the shortest verified draw") {
  const auto spec = tiny_spec();
  const auto problem = tiny_problem();

  SUBCASE("a scripted witness policy returns it deterministically") {
    ParamVector params(spec.vocab_size);
    script_path(params, spec, problem.context(), {1, 0, 2}, 60.0);
    const auto best = long2short::shortest_rejection_sample(params, spec, problem, 1, 6, 5);
    REQUIRE(best.has_value());
    CHECK(best->tokens == std::vector<Token>{1, 0, 2});
  }

  SUBCASE("a policy that cannot stop yields nothing") {
    // Token 0 forever: never finishes, never verifies.
    ParamVector zero_lover(spec.vocab_size);
    const auto ctx = problem.context();
    // Plant token-0 preference on every reachable context depth.
    std::vector<Token> prefix;
    for (int d = 0; d < 6; ++d) {
      zero_lover.set(policy::context_key(spec, ctx, prefix), 0, 60.0);
      prefix.push_back(0);
    }
    const auto best = long2short::shortest_rejection_sample(zero_lover, spec, problem, 8, 6, 5);
    CHECK(!best.has_value());
  }

  SUBCASE("the returned draw is correct and minimal among its own batch") {
    // Uniform policy: re-derive the same 8 draws and check the contract.
    ParamVector params(spec.vocab_size);
    const int n = 8, budget = 6;
    const std::uint64_t seed = 77;
    const auto best = long2short::shortest_rejection_sample(params, spec, problem, n, budget, seed);

    std::optional<Trajectory> expect;
    for (int j = 0; j < n; ++j) {
      auto rng = rng::stream(seed, {rng::L2S, 0, static_cast<std::uint64_t>(j)});
      auto t = policy::sample_sequence(params, spec, problem.context(), budget, rng);
      if (envs::verify(problem, t) != 1) continue;
      if (!expect || t.length() < expect->length()) expect = std::move(t);
    }
    CHECK(best.has_value() == expect.has_value());
    if (best && expect) CHECK(best->tokens == expect->tokens);
  }

  SUBCASE("invalid arguments throw") {
    ParamVector params(spec.vocab_size);
    CHECK_THROWS_AS(long2short::shortest_rejection_sample(params, spec, problem, 0, 6, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(long2short::shortest_rejection_sample(params, spec, problem, 1, 0, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("sft gradient matches finite differences of mean log-likelihood") {
  const auto spec = tiny_spec();
  const auto problem = tiny_problem();
  const auto ctx = problem.context();

  auto rng = rng::Rng{13};
  ParamVector params(spec.vocab_size);
  std::vector<SftExample> examples;
  for (const auto& seq :
       {std::vector<Token>{1, 0, 2}, std::vector<Token>{0, 1, 2}, std::vector<Token>{2}}) {
    std::vector<Token> prefix;
    for (Token t : seq) {
      const auto key = policy::context_key(spec, ctx, prefix);
      for (int v = 0; v < spec.vocab_size; ++v) params.set(key, v, (rng.real() - 0.5) * 2.0);
      prefix.push_back(t);
    }
    examples.push_back({ctx, traj_of(std::vector<Token>(seq))});
  }

  const auto grad = long2short::sft_gradient(params, spec, examples);
  const auto mean_ll = [&](const ParamVector& p) {
    double total = 0.0;
    for (const auto& ex : examples) total += policy::log_prob(p, spec, ex.context, ex.trajectory);
    return total / static_cast<double>(examples.size());
  };
  const double h = 1e-5;
  double max_rel = 0.0;
  for (const auto& [key, row] : grad.rows()) {
    for (int v = 0; v < spec.vocab_size; ++v) {
      ParamVector plus = params, minus = params;
      plus.add(key, v, h);
      minus.add(key, v, -h);
      const double fd = (mean_ll(plus) - mean_ll(minus)) / (2.0 * h);
      max_rel = std::max(max_rel, std::abs(fd - row[v]) / std::max(std::abs(row[v]), 1e-8));
    }
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("sft fitting: zero steps is the identity, many steps reach the target") {
  const auto spec = tiny_spec();
  const auto problem = tiny_problem();
  const auto ctx = problem.context();
  ParamVector params(spec.vocab_size);
  std::vector<SftExample> examples = {{ctx, traj_of({1, 0, 2})}};

  const auto same = long2short::sft_on_samples(params, spec, examples, 0.5, 0);
  CHECK(same.context_count() == 0);

  const auto fitted = long2short::sft_on_samples(params, spec, examples, 0.5, 200);
  // Greedy decoding now reproduces the fitted trajectory.
  std::vector<Token> prefix;
  for (Token want : {1, 0, 2}) {
    const auto probs = policy::next_token_dist(fitted, spec, ctx, prefix);
    const auto argmax =
        static_cast<Token>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    CHECK(argmax == want);
    prefix.push_back(want);
  }

  CHECK_THROWS_AS(long2short::sft_on_samples(params, spec, {}, 0.5, 1), std::invalid_argument);
}

TEST_CASE("dpo pair construction applies the length rules exactly") {
  const auto ctx = tiny_problem().context();
  Long2ShortConfig cfg;  // ratio 1.5

  SUBCASE("the worked four-sample instance") {
    std::vector<std::pair<Trajectory, bool>> samples;
    samples.emplace_back(make_len(4), true);
    samples.emplace_back(make_len(5), true);
    samples.emplace_back(make_len(7), true);
    samples.emplace_back(make_len(6), false);
    const auto pairs = long2short::build_dpo_pairs(ctx, samples, cfg);
    REQUIRE(pairs.size() == 2);
    // Positive is the length-4 correct sample in both pairs; negatives are
    // the length-7 correct (7 >= 1.5*4) and length-6 incorrect samples.
    // The length-5 correct sample is spared (5 < 6).
    for (const auto& p : pairs) CHECK(p.positive.length() == 4);
    CHECK(pairs[0].negative.length() == 7);
    CHECK(pairs[1].negative.length() == 6);
  }

  SUBCASE("no correct sample, no pairs") {
    std::vector<std::pair<Trajectory, bool>> samples;
    samples.emplace_back(make_len(4), false);
    samples.emplace_back(make_len(9), false);
    CHECK(long2short::build_dpo_pairs(ctx, samples, cfg).empty());
  }

  SUBCASE("a lone correct sample has nothing to pair with") {
    std::vector<std::pair<Trajectory, bool>> samples;
    samples.emplace_back(make_len(5), true);
    CHECK(long2short::build_dpo_pairs(ctx, samples, cfg).empty());
  }

  SUBCASE("equal-length wrong samples are not negatives") {
    std::vector<std::pair<Trajectory, bool>> samples;
    samples.emplace_back(make_len(4), true);
    samples.emplace_back(make_len(4), false);  // not strictly longer
    CHECK(long2short::build_dpo_pairs(ctx, samples, cfg).empty());
  }

  SUBCASE("a correct sample at exactly the ratio boundary is a negative") {
    std::vector<std::pair<Trajectory, bool>> samples;
    samples.emplace_back(make_len(4), true);
    samples.emplace_back(make_len(6), true);  // 6 == 1.5 * 4
    const auto pairs = long2short::build_dpo_pairs(ctx, samples, cfg);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].negative.length() == 6);
  }

  SUBCASE("no negative is ever shorter than its positive") {
    auto rng = rng::Rng{31};
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::pair<Trajectory, bool>> samples;
      const int count = 2 + static_cast<int>(rng.uniform(6));
      for (int i = 0; i < count; ++i)
        samples.emplace_back(make_len(1 + rng.uniform(10)), rng.real() < 0.5);
      for (const auto& p : long2short::build_dpo_pairs(ctx, samples, cfg))
        CHECK(p.negative.length() >= p.positive.length());
    }
  }
}

TEST_CASE("dpo loss and gradient") {
  const auto spec = tiny_spec();
  const auto problem = tiny_problem();
  const auto ctx = problem.context();

  SUBCASE("at the reference every pair costs ln 2") {
    ParamVector params(spec.vocab_size);
    params.set(5, 1, 0.75);
    std::vector<DpoPair> pairs = {{ctx, traj_of({1, 0, 2}), traj_of({0, 0, 2})},
                                  {ctx, traj_of({2}), traj_of({0, 2})}};
    CHECK(long2short::dpo_loss(params, params, spec, pairs, 0.1) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  SUBCASE("gradient matches finite differences away from the reference") {
    auto rng = rng::Rng{17};
    ParamVector ref(spec.vocab_size);
    const std::vector<std::vector<Token>> seqs = {{1, 0, 2}, {0, 0, 2}, {0, 1, 2}, {2}};
    for (const auto& seq : seqs) {
      std::vector<Token> prefix;
      for (Token t : seq) {
        const auto key = policy::context_key(spec, ctx, prefix);
        for (int v = 0; v < spec.vocab_size; ++v) ref.set(key, v, (rng.real() - 0.5) * 2.0);
        prefix.push_back(t);
      }
    }
    ParamVector cur = ref;
    for (const auto& [key, row] : ref.rows())
      for (int v = 0; v < spec.vocab_size; ++v) cur.add(key, v, (rng.real() - 0.5));

    std::vector<DpoPair> pairs = {{ctx, traj_of({1, 0, 2}), traj_of({0, 0, 2})},
                                  {ctx, traj_of({2}), traj_of({0, 1, 2})}};
    const double beta = 0.4;
    const auto grad = long2short::dpo_gradient(cur, ref, spec, pairs, beta);
    const double h = 1e-5;
    double max_rel = 0.0;
    for (const auto& [key, row] : grad.rows()) {
      for (int v = 0; v < spec.vocab_size; ++v) {
        ParamVector plus = cur, minus = cur;
        plus.add(key, v, h);
        minus.add(key, v, -h);
        const double fd = (long2short::dpo_loss(plus, ref, spec, pairs, beta) -
                           long2short::dpo_loss(minus, ref, spec, pairs, beta)) /
                          (2.0 * h);
        max_rel = std::max(max_rel, std::abs(fd - row[v]) / std::max(std::abs(row[v]), 1e-8));
      }
    }
    CHECK(max_rel < 1e-4);
  }

  SUBCASE("vanishing beta flattens the objective") {
    ParamVector params(spec.vocab_size);
    params.set(7, 0, 1.0);
    std::vector<DpoPair> pairs = {{ctx, traj_of({1, 0, 2}), traj_of({0, 0, 2})}};
    const auto grad = long2short::dpo_gradient(params, params, spec, pairs, 1e-9);
    CHECK(grad.max_abs() < 1e-6);
  }

  SUBCASE("identical positive and negative leave parameters untouched") {
    ParamVector params(spec.vocab_size);
    params.set(7, 0, 1.0);
    std::vector<DpoPair> pairs = {{ctx, traj_of({1, 0, 2}), traj_of({1, 0, 2})}};
    const auto updated = long2short::dpo_update(params, params, spec, pairs, 0.1, 0.5);
    CHECK(updated.context_count() == params.context_count());
    CHECK(updated.logit(7, 0) == 1.0);
  }

  SUBCASE("one update step raises the mean margin from zero") {
    ParamVector ref(spec.vocab_size);
    std::vector<DpoPair> pairs = {{ctx, traj_of({1, 0, 2}), traj_of({0, 0, 2})},
                                  {ctx, traj_of({2}), traj_of({0, 2})}};
    const double beta = 0.5;
    const auto updated = long2short::dpo_update(ref, ref, spec, pairs, beta, 1.0);
    double mean_margin = 0.0;
    for (const auto& p : pairs) {
      const double pos = policy::log_prob(updated, spec, p.context, p.positive) -
                         policy::log_prob(ref, spec, p.context, p.positive);
      const double neg = policy::log_prob(updated, spec, p.context, p.negative) -
                         policy::log_prob(ref, spec, p.context, p.negative);
      mean_margin += pos - neg;
    }
    mean_margin /= static_cast<double>(pairs.size());
    CHECK(mean_margin > 0.0);
    CHECK(long2short::dpo_loss(updated, ref, spec, pairs, beta) < std::log(2.0));
  }

  SUBCASE("empty pairs are rejected") {
    ParamVector params(spec.vocab_size);
    CHECK_THROWS_AS(long2short::dpo_loss(params, params, spec, {}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(long2short::dpo_gradient(params, params, spec, {}, 0.1),
                    std::invalid_argument);
  }
}

TEST_CASE("long2short RL with a slack budget and zero penalty is ordinary RL") {
  const auto spec = tiny_spec();
  const auto problem = tiny_problem();
  std::vector<Problem> problems = {problem};

  Long2ShortConfig cfg;
  cfg.short_budget = 6;
  mirror::MirrorConfig mcfg;
  mcfg.tau = 1.0;
  mcfg.k = 8;
  mcfg.iterations = 4;
  rewards::LengthPenaltyConfig penalty;
  penalty.weight = 0.0;

  ParamVector start(spec.vocab_size);
  const std::uint64_t seed = 555;
  const auto result = long2short::long2short_rl(start, spec, problems, cfg, mcfg, penalty, seed);

  // Replay the same phase by hand with identical settings and sub-seed.
  ParamVector manual = start;
  rollout::RolloutConfig rcfg;
  rcfg.k = mcfg.k;
  rcfg.budget = cfg.short_budget;
  rcfg.max_total_len = cfg.short_budget;
  rollout::ReplayBuffer buffer(16);
  mirror::Optimizer opt;
  std::vector<const Problem*> fresh = {&problems[0]};
  const auto find = [&problems](std::int64_t id) -> const Problem* {
    return id == problems[0].id ? &problems[0] : nullptr;
  };
  const auto run_seed = rng::derive(seed, {rng::L2S});
  for (int it = 0; it < mcfg.iterations; ++it)
    mirror::train_iteration(manual, spec, fresh, find, buffer, mcfg, rcfg, penalty, it, run_seed,
                            opt);

  CHECK(result.params.context_count() == manual.context_count());
  for (const auto& [key, row] : manual.rows())
    for (int v = 0; v < spec.vocab_size; ++v) CHECK(result.params.logit(key, v) == row[v]);
  CHECK(result.curve.size() == 4);
}

TEST_CASE("long2short RL with budget 1 collapses accuracy to zero") {
  const auto spec = tiny_spec();
  std::vector<Problem> problems = {tiny_problem()};
  Long2ShortConfig cfg;
  cfg.short_budget = 1;  // no room for marker + answer + stop
  mirror::MirrorConfig mcfg;
  mcfg.k = 4;
  mcfg.iterations = 3;
  rewards::LengthPenaltyConfig penalty;
  const auto result = long2short::long2short_rl(ParamVector(spec.vocab_size), spec, problems, cfg,
                                                mcfg, penalty, 9);
  for (const auto& point : result.curve) CHECK(point.accuracy == 0.0);
}

TEST_CASE("long2short RL shortens a verbose but accurate policy") {
  const auto spec = tiny_spec();
  const auto problem = tiny_problem();
  std::vector<Problem> problems = {problem};

  // Start from an accurate policy split between a 5-token detour
  // [0, 0, 1, 0, 2] (about 60% of mass) and the minimal [1, 0, 2] (about
  // 30%): with both correct paths co-occurring in every group, the
  // within-group length shaping has a clean signal from iteration 0.
  const auto ctx = problem.context();
  ParamVector params(spec.vocab_size);
  script_path(params, spec, ctx, {0, 0, 1, 0, 2}, 6.0);
  script_path(params, spec, ctx, {1, 0, 2}, 6.0);
  params.set(policy::context_key(spec, ctx, {}), 0, 2.0);  // root prefers the detour...
  params.set(policy::context_key(spec, ctx, {}), 1, 1.3);  // ...but samples the short path too

  Long2ShortConfig cfg;
  cfg.short_budget = 5;
  mirror::MirrorConfig mcfg;
  mcfg.tau = 0.5;
  mcfg.k = 64;
  mcfg.learning_rate = 1.0;
  mcfg.inner_steps = 5;
  mcfg.iterations = 25;
  rewards::LengthPenaltyConfig penalty;
  penalty.weight = 0.5;

  const auto result = long2short::long2short_rl(params, spec, problems, cfg, mcfg, penalty, 1234);
  REQUIRE(result.curve.size() == 25);
  double early_len = 0.0, late_len = 0.0, late_acc = 0.0;
  for (int i = 0; i < 5; ++i) early_len += result.curve[i].mean_len;
  for (int i = 20; i < 25; ++i) {
    late_len += result.curve[i].mean_len;
    late_acc += result.curve[i].accuracy;
  }
  CHECK(late_len / 5.0 < early_len / 5.0 - 0.5);
  CHECK(late_acc / 5.0 > 0.9);
}

TEST_CASE("efficiency curve CSV layout") {
  const std::string path = "l2s_curve_test.csv";
  long2short::save_efficiency_csv({{0, 0.5, 10.0}, {1, 0.625, 8.5}}, path);
  std::FILE* f = std::fopen(path.c_str(), "r");
  REQUIRE(f != nullptr);
  char line[128];
  REQUIRE(std::fgets(line, sizeof line, f) != nullptr);
  CHECK(std::string(line) == "iteration,accuracy,mean_len\n");
  REQUIRE(std::fgets(line, sizeof line, f) != nullptr);
  CHECK(std::string(line) == "0,0.500000,10.000000\n");
  REQUIRE(std::fgets(line, sizeof line, f) != nullptr);
  CHECK(std::string(line) == "1,0.625000,8.500000\n");
  std::fclose(f);
}
