#pragma once

/**
 * Problem selection. Two composable strategies sit on top of a per-problem
 * success tracker: a curriculum schedule (warm up on everything, then train
 * on hard problems only) and prioritized sampling with probabilities
 * proportional to the failure rate 1 - s_i. Pass-rate estimation lives here
 * too since both selection and curation consume it.
 */

#include "minicot/envs.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace minicot::sampling {

struct ProblemStats {
  std::int64_t attempts = 0;
  std::int64_t successes = 0;
};

class DifficultyTracker {
 public:
  /// `prior_success_rate` is reported for problems never attempted; the
  /// default 0 gives unattempted problems maximal sampling priority.
  explicit DifficultyTracker(double prior_success_rate = 0.0);

  void update(std::int64_t problem_id, bool success);

  /// successes / attempts, or the prior when the problem is unattempted.
  double success_rate(std::int64_t problem_id) const;

  /// nullptr when the problem was never attempted.
  const ProblemStats* stats(std::int64_t problem_id) const;

  std::size_t tracked_count() const { return stats_.size(); }
  double prior() const { return prior_; }

  /// Text persistence so interrupted runs resume with their difficulty
  /// knowledge intact.
  void save(const std::string& path) const;
  static DifficultyTracker load(const std::string& path);

 private:
  double prior_ = 0.0;
  std::map<std::int64_t, ProblemStats> stats_;
};

/// Sampling distribution proportional to 1 - s_i over `problem_ids`. Falls
/// back to uniform when every problem is fully solved. Throws
/// std::invalid_argument on an empty id list.
std::vector<double> prioritized_weights(const DifficultyTracker& tracker,
                                        const std::vector<std::int64_t>& problem_ids);

struct CurriculumSchedule {
  int warmup_iterations = 0;
  int hard_threshold = 1;  // difficulty cutoff once warm-up ends

  void validate() const;
};

/**
 * Indices of the problems eligible at `iteration`: everything during
 * warm-up, then only difficulties >= hard_threshold. Never empty — if the
 * threshold excludes every problem, the maximum-difficulty stratum is
 * returned instead. Throws std::invalid_argument on an empty problem set.
 */
std::vector<std::size_t> curriculum_filter(const std::vector<envs::Problem>& problems,
                                           int iteration, const CurriculumSchedule& schedule);

/**
 * Fraction of `attempts` independent samples (at the given sampling
 * temperature, up to max_tokens tokens each) that verify against the
 * problem. Deterministic given the seed.
 */
double estimate_pass_rate(const policy::ParamVector& params, const policy::PolicySpec& spec,
                          const envs::Problem& problem, int attempts, double temperature,
                          std::uint64_t seed, int max_tokens = 32);

}  // namespace minicot::sampling
