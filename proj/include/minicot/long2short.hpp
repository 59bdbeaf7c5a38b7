#pragma once
/**
 * Token-efficiency transfer: squeeze a trained long-chain policy into a
 * short-chain one. Four chainable paths over the same ParamVector type:
 * weight merging, shortest-rejection-sampling SFT, preference updates
 * (DPO), and a second RL phase with the length penalty active from the
 * first iteration under a reduced rollout budget.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "minicot/envs.hpp"
#include "minicot/mirror.hpp"
#include "minicot/policy.hpp"
#include "minicot/rewards.hpp"

namespace minicot::long2short {

struct Long2ShortConfig {
  int srs_samples = 8;           // n draws for shortest rejection sampling
  double dpo_length_ratio = 1.5; // correct-but-long negative cutoff (x positive len)
  double dpo_beta = 0.1;
  int short_budget = 12;         // reduced per-iteration rollout budget
  double merge_weight = 0.5;     // weight on the long policy when merging
  // Source-checkpoint selection: the harness picks the long-policy
  // checkpoint maximizing accuracy - source_lambda * mean_length on a
  // validation split before compressing it.
  double source_lambda = 1e-3;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

/// Entry-wise average of two policies: merge_weight on the long one.
policy::ParamVector merge_policies(const policy::ParamVector& long_policy,
                                   const policy::ParamVector& short_policy,
                                   const Long2ShortConfig& config);

/**
 * Draw n independent samples (up to `budget` tokens) and return the
 * shortest one the verifier accepts; ties break toward the earlier draw.
 * Empty when every sample is wrong.
 */
std::optional<policy::Trajectory> shortest_rejection_sample(const policy::ParamVector& params,
                                                            const policy::PolicySpec& spec,
                                                            const envs::Problem& problem, int n,
                                                            int budget, std::uint64_t seed);

struct SftExample {
  policy::ProblemContext context;
  policy::Trajectory trajectory;
};

/// Mean grad-log-likelihood over the examples, every token unmasked.
/// Throws std::invalid_argument on an empty set.
policy::SparseDelta sft_gradient(const policy::ParamVector& params,
                                 const policy::PolicySpec& spec,
                                 const std::vector<SftExample>& examples);

/// `steps` ascent steps on mean log-likelihood; pure fitting, no rewards.
policy::ParamVector sft_on_samples(const policy::ParamVector& params,
                                   const policy::PolicySpec& spec,
                                   const std::vector<SftExample>& examples, double learning_rate,
                                   int steps);

struct DpoPair {
  policy::ProblemContext context;
  policy::Trajectory positive;
  policy::Trajectory negative;
};

/**
 * Pair one problem's samples for preference training. The positive is the
 * shortest correct sample (ties toward the earlier index); negatives are
 * incorrect samples strictly longer than it, plus correct samples at
 * least dpo_length_ratio times its length. No correct sample -> no pairs.
 */
std::vector<DpoPair> build_dpo_pairs(const policy::ProblemContext& ctx,
                                     const std::vector<std::pair<policy::Trajectory, bool>>& samples,
                                     const Long2ShortConfig& config);

/// Mean over pairs of -log sigmoid(beta * margin), where the margin is the
/// policy/reference log-ratio gap between positive and negative.
/// Throws std::invalid_argument on empty pairs.
double dpo_loss(const policy::ParamVector& params, const policy::ParamVector& ref_params,
                const policy::PolicySpec& spec, const std::vector<DpoPair>& pairs, double beta);

/// Gradient of dpo_loss in the logits. Pairs whose positive and negative
/// tokens coincide contribute nothing (their margin is identically zero).
policy::SparseDelta dpo_gradient(const policy::ParamVector& params,
                                 const policy::ParamVector& ref_params,
                                 const policy::PolicySpec& spec, const std::vector<DpoPair>& pairs,
                                 double beta);

/// One descent step on dpo_loss against the frozen reference.
policy::ParamVector dpo_update(const policy::ParamVector& params,
                               const policy::ParamVector& ref_params,
                               const policy::PolicySpec& spec, const std::vector<DpoPair>& pairs,
                               double beta, double learning_rate);

struct EfficiencyPoint {
  int iteration = 0;
  double accuracy = 0.0;
  double mean_len = 0.0;
};

struct L2sRlResult {
  policy::ParamVector params{0};
  std::vector<EfficiencyPoint> curve;
};

/**
 * Second RL phase: mirror-descent iterations over `problems` with the
 * length penalty active from iteration 0 and budget and total length both
 * capped at short_budget. mirror_cfg.iterations controls the phase length.
 */
L2sRlResult long2short_rl(const policy::ParamVector& params, const policy::PolicySpec& spec,
                          const std::vector<envs::Problem>& problems,
                          const Long2ShortConfig& config, const mirror::MirrorConfig& mirror_cfg,
                          const rewards::LengthPenaltyConfig& penalty, std::uint64_t seed);

/// Token-efficiency curve as CSV: header iteration,accuracy,mean_len.
void save_efficiency_csv(const std::vector<EfficiencyPoint>& curve, const std::string& path);

}  // namespace minicot::long2short
