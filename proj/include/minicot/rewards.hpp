#pragma once

/**
 * Reward shaping: batch-relative length rewards with a warm-up schedule,
 * plus the repetition penalty and the rule that combines everything with
 * the 0/1 correctness reward.
 *
 * Length rewards are normalized within the k samples of ONE problem: with
 * min/max over that group, lambda = 0.5 - (len - min)/(max - min). Correct
 * samples receive lambda, incorrect ones min(0, lambda), so a short wrong
 * answer is never rewarded for brevity.
 */

#include <vector>

namespace minicot::rewards {

struct LengthPenaltyConfig {
  double weight = 1.0;        // combination weight on the length reward
  int warmup_iterations = 0;  // iterations with the penalty switched off
  double repeat_penalty = -0.5;

  /// Throws std::invalid_argument on malformed configs.
  void validate() const;
};

struct LengthSample {
  int length = 1;
  bool correct = false;
};

/// Per-sample length rewards for one problem's sample group. All outputs
/// lie in [-0.5, 0.5]; equal lengths yield all zeros. Throws
/// std::invalid_argument on an empty group or non-positive lengths.
std::vector<double> length_rewards(const std::vector<LengthSample>& samples);

/// Hard step schedule: 0.0 strictly before warmup_iterations, 1.0 from
/// then on.
double warmup_scale(int iteration, const LengthPenaltyConfig& config);

/// base + warmup * weight * len_reward + repeat_penalty (if detected).
double combined_reward(int base, double len_reward, bool repeat_detected, int iteration,
                       const LengthPenaltyConfig& config);

}  // namespace minicot::rewards
