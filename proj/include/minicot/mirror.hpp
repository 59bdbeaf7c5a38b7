#pragma once

/**
 * Iterative online policy mirror descent with an off-policy surrogate.
 *
 * Each iteration freezes the current parameters as the reference policy,
 * draws k responses per problem from it (through the partial-rollout
 * engine), shapes rewards, and then takes gradient steps on the fixed
 * batch. The relative-entropy-regularized objective has the closed-form
 * optimum pi*(y) proportional to pi_ref(y) * exp(r(y)/tau); the update
 * implemented here is its sampled surrogate:
 *
 *   (1/k) sum_j grad log pi(y_j) * [ (r_j - baseline) - tau * log(pi/pi_ref)(y_j) ]
 *
 * with the baseline either the mean sampled reward or the sample
 * approximation of tau*log Z. No value network anywhere.
 */

#include "minicot/envs.hpp"
#include "minicot/rewards.hpp"
#include "minicot/rollout.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace minicot::mirror {

enum class BaselineMode { mean_reward, log_mean_exp };

struct MirrorConfig {
  double tau = 0.5;
  int k = 8;
  double learning_rate = 1.0;
  BaselineMode baseline_mode = BaselineMode::mean_reward;
  int inner_steps = 1;
  int iterations = 300;
  double momentum = 0.0;  // 0 = plain gradient ascent

  void validate() const;
};

/// Sample-approximated tau*log Z (mode log_mean_exp) or the mean reward.
/// Throws std::invalid_argument on an empty reward list.
double approx_log_z_term(const std::vector<double>& rewards, double tau, BaselineMode mode);

struct Sample {
  policy::Trajectory trajectory;
  double reward = 0.0;       // shaped reward
  double ref_logprob = 0.0;  // under the frozen reference, masked tokens only
};

struct ProblemBatch {
  std::int64_t problem_id = -1;
  policy::ProblemContext context;
  std::vector<Sample> samples;
  double baseline = 0.0;
};

struct SurrogateBatch {
  std::vector<ProblemBatch> problems;
};

/// Input group for batch construction: one problem's trajectories and their
/// shaped rewards, in matching order.
struct SampleGroup {
  std::int64_t problem_id = -1;
  policy::ProblemContext context;
  std::vector<policy::Trajectory> trajectories;
  std::vector<double> rewards;
};

/// Freeze reference log-probs and baselines for a set of sample groups.
/// Must be called before any parameter update of the iteration.
SurrogateBatch make_batch(const policy::ParamVector& ref_params, const policy::PolicySpec& spec,
                          std::vector<SampleGroup> groups, double tau, BaselineMode mode);

/// Mean over problems and samples of (r - baseline - tau*log(pi/pi_ref))^2.
double surrogate_loss(const policy::ParamVector& params, const policy::ParamVector& ref_params,
                      const policy::PolicySpec& spec, const SurrogateBatch& batch, double tau);

/**
 * The sampled update objective whose gradient is the mirror-descent step:
 * mean over problems of (1/k) sum_j [ (r_j - baseline) * log pi(y_j)
 * - (tau/2) * (log pi(y_j) - log pi_ref(y_j))^2 ]. Exposed so gradient_step
 * can be checked against finite differences of a scalar.
 */
double update_objective(const policy::ParamVector& params, const policy::ParamVector& ref_params,
                        const policy::PolicySpec& spec, const SurrogateBatch& batch, double tau);

/// Gradient of update_objective with respect to the logits.
policy::SparseDelta update_gradient(const policy::ParamVector& params,
                                    const policy::ParamVector& ref_params,
                                    const policy::PolicySpec& spec, const SurrogateBatch& batch,
                                    double tau);

/// Per-iteration optimizer state. Plain ascent when momentum is 0; the
/// accumulator exists so the per-iteration reset is observable.
struct Optimizer {
  double momentum = 0.0;
  policy::SparseDelta velocity{0};

  void reset(int vocab) { velocity = policy::SparseDelta(vocab); }
};

/**
 * One ascent step along update_gradient with per-row sample-mean
 * normalization: each touched row moves by learning_rate times the mean
 * contribution of the samples that touched it (update_gradient's row sum
 * rescaled by total samples / samples on that row). Rows shared by many
 * samples and rows seen once then step at the same scale, so one learning
 * rate stays stable across batch sizes; stationary points are exactly
 * those of update_gradient. `optimizer` may be null (plain step).
 */
policy::ParamVector gradient_step(const policy::ParamVector& params,
                                  const policy::ParamVector& ref_params,
                                  const policy::PolicySpec& spec, const SurrogateBatch& batch,
                                  const MirrorConfig& config, Optimizer* optimizer = nullptr);

/// ReST-style baseline: ascend log-likelihood of the reward-maximal
/// response per problem (ties -> shortest, then lowest index); responses
/// with reward <= 0 contribute nothing. Rows are normalized the same way
/// as gradient_step: each moves by learning_rate times the mean gradient
/// of the fitted trajectories touching it.
policy::ParamVector rest_step(const policy::ParamVector& params, const policy::PolicySpec& spec,
                              const SurrogateBatch& batch, double learning_rate);

/// Distribution over every trajectory the policy can emit within max_len
/// tokens (stop-token- or cap-terminated), in depth-first token order.
struct TrajectoryDist {
  std::vector<std::vector<policy::Token>> sequences;
  std::vector<double> probs;
};

/// Exhaustive policy distribution. Refuses when vocab^max_len > 1e6.
TrajectoryDist enumerate_policy_dist(const policy::ParamVector& params,
                                     const policy::PolicySpec& spec,
                                     const policy::ProblemContext& ctx, int max_len);

/// The closed-form optimum pi* proportional to pi_ref * exp(verify/tau) over the
/// same trajectory space.
TrajectoryDist closed_form_target(const policy::ParamVector& ref_params,
                                  const policy::PolicySpec& spec, const envs::Problem& problem,
                                  double tau, int max_len);

/// 0.5 * sum |p_i - q_i| over aligned supports. Throws
/// std::invalid_argument when the supports differ.
double total_variation(const TrajectoryDist& a, const TrajectoryDist& b);

struct SampleOutcome {
  std::int64_t problem_id = -1;
  bool correct = false;
  bool finished = false;
  bool repeat_detected = false;
  int length = 0;
  double reward = 0.0;
};

struct TrainOutcome {
  std::vector<SampleOutcome> outcomes;  // trajectories that left the system
  double mean_reward = 0.0;
  double accuracy = 0.0;
  double mean_len = 0.0;
  double p95_len = 0.0;
  std::size_t buffer_depth = 0;
  int resumed = 0;
  int fresh = 0;
};

/**
 * One full mirror-descent iteration over `fresh_problems`:
 * freeze reference -> rollout phase (partial rollouts honored) -> shaped
 * rewards -> optimizer reset -> inner_steps gradient steps on the fixed
 * batch. `params` is updated in place; the outcome carries the statistics
 * for reporting and tracker updates.
 */
TrainOutcome train_iteration(policy::ParamVector& params, const policy::PolicySpec& spec,
                             std::span<const envs::Problem* const> fresh_problems,
                             const std::function<const envs::Problem*(std::int64_t)>& find_problem,
                             rollout::ReplayBuffer& buffer, const MirrorConfig& config,
                             const rollout::RolloutConfig& rollout_cfg,
                             const rewards::LengthPenaltyConfig& penalty, int iteration,
                             std::uint64_t run_seed, Optimizer& optimizer);

/**
 * Baseline iteration for ablations: identical rollout and reward plumbing,
 * but the update is one rest_step (fit the best rewarded response per
 * problem) instead of mirror-descent inner steps.
 */
TrainOutcome rest_iteration(policy::ParamVector& params, const policy::PolicySpec& spec,
                            std::span<const envs::Problem* const> fresh_problems,
                            const std::function<const envs::Problem*(std::int64_t)>& find_problem,
                            rollout::ReplayBuffer& buffer, double learning_rate,
                            const MirrorConfig& config, const rollout::RolloutConfig& rollout_cfg,
                            const rewards::LengthPenaltyConfig& penalty, int iteration,
                            std::uint64_t run_seed);

}  // namespace minicot::mirror
