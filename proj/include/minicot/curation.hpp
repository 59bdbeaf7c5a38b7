#pragma once
/**
 * Prompt-set curation: pass-rate difficulty bucketing, the easy-to-hack
 * guess filter, and a majority-vote protocol for validating test cases
 * against a pool of candidate oracles.
 *
 * Everything here is deterministic given a seed; per-problem randomness
 * flows through independent sub-streams so removal decisions never
 * correlate across problems.
 */

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "minicot/envs.hpp"
#include "minicot/policy.hpp"
#include "minicot/rng.hpp"

namespace minicot::curation {

struct CurationConfig {
  int guess_attempts = 8;        // N guesses before a prompt counts as hackable
  int pass_rate_attempts = 10;   // samples per problem for difficulty estimation
  double bucket_lower = 0.3;     // pass rate below this -> hard
  double bucket_upper = 0.7;     // pass rate at or above this -> easy
  double case_agree_threshold = 0.7;   // fraction of submissions that must agree
  double suite_accept_threshold = 0.9; // fraction that must pass all selected cases
  int cases_per_problem = 50;
  int submissions_sampled = 10;
  double guess_temperature = 1.2;  // sampling temperature for pass-rate rollouts

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

enum class Bucket { easy, moderate, hard };

const char* bucket_name(Bucket b);

/// Half-open bucketing: hard if rate < lower, easy if rate >= upper,
/// moderate in between (a rate exactly at the lower edge is moderate).
/// Throws std::invalid_argument when rate is outside [0, 1].
Bucket difficulty_bucket(double pass_rate, const CurationConfig& config);

/// A no-chain-of-thought answer guesser. The default draws uniformly from
/// the problem's answer space; tests inject rigged ones.
using Guesser = std::function<policy::Token(const envs::Problem&, rng::Rng&)>;

struct FilterReport {
  std::vector<envs::Problem> kept;
  std::vector<std::int64_t> removed_ids;
};

/**
 * Remove every problem whose ground truth any of N independent guesses
 * hits. Each problem consumes its own RNG sub-stream keyed by id, so
 * decisions are independent across problems and stable under reordering.
 */
FilterReport filter_easy_to_hack(const std::vector<envs::Problem>& problems,
                                 const Guesser& guesser, int guess_attempts,
                                 std::uint64_t seed);

/// One candidate oracle: maps a test input to an output value.
using Submission = std::function<std::int64_t(std::int64_t)>;

struct CaseVote {
  std::int64_t input = 0;
  std::vector<std::int64_t> outputs;  // one per submission, in order
  bool selected = false;
  std::int64_t expected = 0;  // majority value; meaningful only when selected
};

struct ValidationResult {
  std::vector<CaseVote> votes;  // one per input case
  std::vector<std::size_t> selected_indices;
  std::vector<bool> submission_passed;  // passed every selected case
  bool accepted = false;
};

/**
 * Majority-vote test-case validation. A case is selected iff a single
 * output value is produced by at least case_agree_threshold of the
 * submissions; that value becomes the expected output. The suite is
 * accepted iff at least suite_accept_threshold of the submissions pass
 * every selected case. Zero selected cases always rejects.
 * Throws std::invalid_argument when submissions is empty.
 */
ValidationResult validate_test_cases(const std::vector<std::int64_t>& cases,
                                     const std::vector<Submission>& submissions,
                                     const CurationConfig& config);

struct ProblemCuration {
  std::int64_t problem_id = -1;
  double pass_rate = 0.0;
  Bucket bucket = Bucket::moderate;
  bool removed_as_hackable = false;
};

struct CurationReport {
  std::vector<ProblemCuration> entries;
  std::vector<std::int64_t> kept_ids;
};

/**
 * Full pipeline over a problem set: estimate a pass rate with the policy
 * (pass_rate_attempts samples at guess_temperature), bucket it, and apply
 * the easy-to-hack filter. Problems survive iff not hackable.
 */
CurationReport curate_problem_set(const std::vector<envs::Problem>& problems,
                                  const policy::ParamVector& params,
                                  const policy::PolicySpec& spec, const CurationConfig& config,
                                  std::uint64_t seed);

/// Plain-text report: one line per problem plus a kept-id summary.
void save_report(const CurationReport& report, const std::string& path);

}  // namespace minicot::curation
