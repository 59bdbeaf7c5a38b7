#include "minicot/mirror.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace minicot::mirror {

void MirrorConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("MirrorConfig: tau must be > 0");
  if (k < 2) throw std::invalid_argument("MirrorConfig: k must be >= 2");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("MirrorConfig: learning_rate must be > 0");
  if (inner_steps < 1) throw std::invalid_argument("MirrorConfig: inner_steps must be >= 1");
  if (iterations < 0) throw std::invalid_argument("MirrorConfig: iterations must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("MirrorConfig: momentum must lie in [0, 1)");
}

double approx_log_z_term(const std::vector<double>& rewards, double tau, BaselineMode mode) {
  if (rewards.empty()) throw std::invalid_argument("approx_log_z_term: empty reward list");
  if (mode == BaselineMode::mean_reward) {
    double sum = 0.0;
    for (double r : rewards) sum += r;
    return sum / rewards.size();
  }
  // tau * log( (1/k) sum exp(r_j / tau) ), max-subtracted for stability.
  double max_r = rewards.front();
  for (double r : rewards) max_r = std::max(max_r, r);
  double acc = 0.0;
  for (double r : rewards) acc += std::exp((r - max_r) / tau);
  return max_r + tau * std::log(acc / rewards.size());
}

SurrogateBatch make_batch(const policy::ParamVector& ref_params, const policy::PolicySpec& spec,
                          std::vector<SampleGroup> groups, double tau, BaselineMode mode) {
  SurrogateBatch batch;
  for (auto& group : groups) {
    if (group.trajectories.size() != group.rewards.size())
      throw std::invalid_argument("make_batch: trajectory/reward count mismatch");
    if (group.trajectories.empty()) continue;
    ProblemBatch pb;
    pb.problem_id = group.problem_id;
    pb.context = std::move(group.context);
    pb.baseline = approx_log_z_term(group.rewards, tau, mode);
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      Sample s;
      s.trajectory = std::move(group.trajectories[i]);
      s.reward = group.rewards[i];
      s.ref_logprob =
          policy::log_prob(ref_params, spec, pb.context, s.trajectory, s.trajectory.loss_mask);
      pb.samples.push_back(std::move(s));
    }
    batch.problems.push_back(std::move(pb));
  }
  return batch;
}

double surrogate_loss(const policy::ParamVector& params, const policy::ParamVector& ref_params,
                      const policy::PolicySpec& spec, const SurrogateBatch& batch, double tau) {
  (void)ref_params;  // reference enters through the frozen per-sample log-probs
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& pb : batch.problems) {
    for (const auto& s : pb.samples) {
      const double lp =
          policy::log_prob(params, spec, pb.context, s.trajectory, s.trajectory.loss_mask);
      const double residual = s.reward - pb.baseline - tau * (lp - s.ref_logprob);
      total += residual * residual;
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / count;
}

double update_objective(const policy::ParamVector& params, const policy::ParamVector& ref_params,
                        const policy::PolicySpec& spec, const SurrogateBatch& batch, double tau) {
  (void)ref_params;
  double total = 0.0;
  for (const auto& pb : batch.problems) {
    if (pb.samples.empty()) continue;
    double problem_term = 0.0;
    for (const auto& s : pb.samples) {
      const double lp =
          policy::log_prob(params, spec, pb.context, s.trajectory, s.trajectory.loss_mask);
      const double ratio = lp - s.ref_logprob;
      problem_term += (s.reward - pb.baseline) * lp - 0.5 * tau * ratio * ratio;
    }
    total += problem_term / pb.samples.size();
  }
  return batch.problems.empty() ? 0.0 : total / batch.problems.size();
}

namespace {

/// Per-row statistics for the sample-mean step normalization: how many
/// distinct contributing samples touched each row, and how many samples
/// the batch holds in total.
struct RowVisits {
  std::size_t total_samples = 0;
  std::unordered_map<policy::ContextKey, double> counts;
};

policy::SparseDelta surrogate_grad(const policy::ParamVector& params,
                                   const policy::PolicySpec& spec, const SurrogateBatch& batch,
                                   double tau, RowVisits* visits) {
  policy::SparseDelta grad(spec.vocab_size);
  if (batch.problems.empty()) return grad;
  const double problem_scale = 1.0 / batch.problems.size();
  std::vector<policy::ContextKey> keys;
  for (const auto& pb : batch.problems) {
    if (pb.samples.empty()) continue;
    const double sample_scale = problem_scale / pb.samples.size();
    for (const auto& s : pb.samples) {
      if (visits != nullptr) ++visits->total_samples;
      const double lp =
          policy::log_prob(params, spec, pb.context, s.trajectory, s.trajectory.loss_mask);
      const double coeff = (s.reward - pb.baseline) - tau * (lp - s.ref_logprob);
      if (coeff == 0.0) continue;
      policy::accumulate_grad_log_prob(params, spec, pb.context, s.trajectory,
                                       sample_scale * coeff, grad, s.trajectory.loss_mask);
      if (visits == nullptr) continue;
      keys.clear();
      const auto& mask = s.trajectory.loss_mask;
      for (int i = 0; i < s.trajectory.length(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        keys.push_back(policy::context_key(
            spec, pb.context, std::span<const policy::Token>(s.trajectory.tokens.data(), i)));
      }
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
      for (const auto key : keys) visits->counts[key] += 1.0;
    }
  }
  return grad;
}

/// Rescale each gradient row by total_samples / (samples touching it), so
/// the applied step is the learning rate times the per-row sample mean.
/// Hot shared rows and rarely visited rows then move at the same scale,
/// which keeps one learning rate stable across batch shapes.
policy::SparseDelta row_normalized(const policy::SparseDelta& grad, const RowVisits& visits,
                                   int vocab) {
  policy::SparseDelta step(vocab);
  for (const auto& [key, row] : grad.rows()) {
    const auto it = visits.counts.find(key);
    const double n = it == visits.counts.end() ? 1.0 : it->second;
    const double scale = static_cast<double>(visits.total_samples) / n;
    auto& dst = step.row_mut(key);
    for (int t = 0; t < vocab; ++t) dst[t] = scale * row[t];
  }
  return step;
}

}  // namespace

policy::SparseDelta update_gradient(const policy::ParamVector& params,
                                    const policy::ParamVector& ref_params,
                                    const policy::PolicySpec& spec, const SurrogateBatch& batch,
                                    double tau) {
  (void)ref_params;
  return surrogate_grad(params, spec, batch, tau, nullptr);
}

policy::ParamVector gradient_step(const policy::ParamVector& params,
                                  const policy::ParamVector& ref_params,
                                  const policy::PolicySpec& spec, const SurrogateBatch& batch,
                                  const MirrorConfig& config, Optimizer* optimizer) {
  config.validate();
  (void)ref_params;
  RowVisits visits;
  const auto grad = surrogate_grad(params, spec, batch, config.tau, &visits);
  const auto step = row_normalized(grad, visits, spec.vocab_size);
  policy::ParamVector out = params;
  if (optimizer != nullptr && optimizer->momentum > 0.0) {
    policy::SparseDelta velocity(spec.vocab_size);
    velocity.axpy(optimizer->momentum, optimizer->velocity);
    velocity.axpy(1.0, step);
    optimizer->velocity = velocity;
    optimizer->velocity.apply_to(out, config.learning_rate);
  } else {
    if (optimizer != nullptr) optimizer->velocity = step;
    step.apply_to(out, config.learning_rate);
  }
  return out;
}

policy::ParamVector rest_step(const policy::ParamVector& params, const policy::PolicySpec& spec,
                              const SurrogateBatch& batch, double learning_rate) {
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("rest_step: learning_rate must be > 0");
  policy::SparseDelta grad(spec.vocab_size);
  RowVisits visits;
  std::vector<policy::ContextKey> keys;
  for (const auto& pb : batch.problems) {
    const Sample* best = nullptr;
    for (const auto& s : pb.samples) {
      if (s.reward <= 0.0) continue;
      if (best == nullptr || s.reward > best->reward ||
          (s.reward == best->reward && s.trajectory.length() < best->trajectory.length()))
        best = &s;
    }
    if (best == nullptr) continue;  // nothing positive to fit
    const auto& traj = best->trajectory;
    policy::accumulate_grad_log_prob(params, spec, pb.context, traj, 1.0, grad, traj.loss_mask);
    ++visits.total_samples;
    keys.clear();
    for (int i = 0; i < traj.length(); ++i) {
      if (!traj.loss_mask.empty() && !traj.loss_mask[i]) continue;
      keys.push_back(policy::context_key(
          spec, pb.context, std::span<const policy::Token>(traj.tokens.data(), i)));
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    for (const auto key : keys) visits.counts[key] += 1.0;
  }
  policy::ParamVector out = params;
  if (visits.total_samples > 0) {
    // Same per-row sample-mean normalization as gradient_step: each row
    // moves by the learning rate times the mean gradient of the fitted
    // trajectories that touch it.
    row_normalized(grad, visits, spec.vocab_size)
        .apply_to(out, learning_rate / static_cast<double>(visits.total_samples));
  }
  return out;
}

namespace {

void enumerate_rec(const policy::ParamVector& params, const policy::PolicySpec& spec,
                   const policy::ProblemContext& ctx, int max_len,
                   std::vector<policy::Token>& prefix, double prob, TrajectoryDist& out) {
  if (!prefix.empty() &&
      (prefix.back() == spec.stop_token || static_cast<int>(prefix.size()) == max_len)) {
    out.sequences.push_back(prefix);
    out.probs.push_back(prob);
    return;
  }
  const auto dist = policy::next_token_dist(params, spec, ctx, prefix);
  for (policy::Token t = 0; t < spec.vocab_size; ++t) {
    prefix.push_back(t);
    enumerate_rec(params, spec, ctx, max_len, prefix, prob * dist[t], out);
    prefix.pop_back();
  }
}

void check_enumerable(const policy::PolicySpec& spec, int max_len) {
  if (max_len < 1) throw std::invalid_argument("enumeration: max_len must be >= 1");
  double count = 1.0;
  for (int i = 0; i < max_len; ++i) count *= spec.vocab_size;
  if (count > 1e6)
    throw std::invalid_argument("enumeration: vocab^max_len exceeds the 1e6 guard");
}

}  // namespace

TrajectoryDist enumerate_policy_dist(const policy::ParamVector& params,
                                     const policy::PolicySpec& spec,
                                     const policy::ProblemContext& ctx, int max_len) {
  check_enumerable(spec, max_len);
  TrajectoryDist out;
  std::vector<policy::Token> prefix;
  enumerate_rec(params, spec, ctx, max_len, prefix, 1.0, out);
  return out;
}

TrajectoryDist closed_form_target(const policy::ParamVector& ref_params,
                                  const policy::PolicySpec& spec, const envs::Problem& problem,
                                  double tau, int max_len) {
  if (!(tau > 0.0)) throw std::invalid_argument("closed_form_target: tau must be > 0");
  auto dist = enumerate_policy_dist(ref_params, spec, problem.context(), max_len);
  double z = 0.0;
  for (std::size_t i = 0; i < dist.sequences.size(); ++i) {
    policy::Trajectory traj;
    traj.tokens = dist.sequences[i];
    traj.finished = !traj.tokens.empty() && traj.tokens.back() == spec.stop_token;
    const double reward = envs::verify(problem, traj);
    dist.probs[i] *= std::exp(reward / tau);
    z += dist.probs[i];
  }
  if (!(z > 0.0)) throw std::runtime_error("closed_form_target: degenerate normalizer");
  for (double& p : dist.probs) p /= z;
  return dist;
}

double total_variation(const TrajectoryDist& a, const TrajectoryDist& b) {
  if (a.sequences.size() != b.sequences.size())
    throw std::invalid_argument("total_variation: support size mismatch");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.probs.size(); ++i) {
    if (a.sequences[i] != b.sequences[i])
      throw std::invalid_argument("total_variation: support mismatch");
    tv += std::abs(a.probs[i] - b.probs[i]);
  }
  return 0.5 * tv;
}

namespace {

struct Collected {
  TrainOutcome outcome;
  SurrogateBatch batch;
  bool empty = true;
};

/// Shared first half of an iteration: rollouts under the frozen reference,
/// shaped rewards grouped per problem, and the reporting statistics.
Collected collect_iteration(const policy::ParamVector& ref_params, const policy::PolicySpec& spec,
                            std::span<const envs::Problem* const> fresh_problems,
                            const std::function<const envs::Problem*(std::int64_t)>& find_problem,
                            rollout::ReplayBuffer& buffer, const MirrorConfig& config,
                            const rollout::RolloutConfig& rollout_cfg,
                            const rewards::LengthPenaltyConfig& penalty, int iteration,
                            std::uint64_t run_seed) {
  auto rolled = rollout::rollout_phase(ref_params, spec, fresh_problems, find_problem,
                                       rollout_cfg, buffer, iteration, run_seed);

  Collected out;
  out.outcome.buffer_depth = buffer.size();
  out.outcome.resumed = rolled.resumed_count;
  out.outcome.fresh = rolled.fresh_count;
  if (rolled.done.empty()) return out;
  out.empty = false;

  // Group per problem: that grouping is the update formula's index set.
  std::map<std::int64_t, std::vector<policy::Trajectory>> by_problem;
  for (auto& traj : rolled.done) by_problem[traj.problem_id].push_back(std::move(traj));

  std::vector<SampleGroup> groups;
  std::vector<int> lengths;
  double reward_sum = 0.0;
  std::size_t correct_count = 0, total = 0;
  for (auto& [problem_id, trajs] : by_problem) {
    const envs::Problem* problem = find_problem(problem_id);
    if (problem == nullptr)
      throw std::runtime_error("collect_iteration: no resolver entry for problem");
    SampleGroup group;
    group.problem_id = problem_id;
    group.context = problem->context();

    std::vector<rewards::LengthSample> length_samples;
    std::vector<int> base;
    for (const auto& traj : trajs) {
      const int correct = envs::verify(*problem, traj);
      base.push_back(correct);
      length_samples.push_back({std::max(1, traj.length()), correct == 1});
    }
    const auto len_rewards = rewards::length_rewards(length_samples);

    for (std::size_t i = 0; i < trajs.size(); ++i) {
      const double r = rewards::combined_reward(base[i], len_rewards[i],
                                                trajs[i].repeat_detected, iteration, penalty);
      SampleOutcome so;
      so.problem_id = problem_id;
      so.correct = base[i] == 1;
      so.finished = trajs[i].finished;
      so.repeat_detected = trajs[i].repeat_detected;
      so.length = trajs[i].length();
      so.reward = r;
      out.outcome.outcomes.push_back(so);

      reward_sum += r;
      correct_count += base[i];
      lengths.push_back(trajs[i].length());
      ++total;
      group.rewards.push_back(r);
    }
    group.trajectories = std::move(trajs);
    groups.push_back(std::move(group));
  }

  out.outcome.mean_reward = reward_sum / total;
  out.outcome.accuracy = static_cast<double>(correct_count) / total;
  double len_sum = 0.0;
  for (int l : lengths) len_sum += l;
  out.outcome.mean_len = len_sum / total;
  std::sort(lengths.begin(), lengths.end());
  // Nearest-rank p95: the ceil(0.95 n)-th smallest length.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(lengths.size())));
  out.outcome.p95_len = lengths[std::min(lengths.size() - 1, rank - 1)];

  out.batch = make_batch(ref_params, spec, std::move(groups), config.tau, config.baseline_mode);
  return out;
}

}  // namespace

TrainOutcome train_iteration(policy::ParamVector& params, const policy::PolicySpec& spec,
                             std::span<const envs::Problem* const> fresh_problems,
                             const std::function<const envs::Problem*(std::int64_t)>& find_problem,
                             rollout::ReplayBuffer& buffer, const MirrorConfig& config,
                             const rollout::RolloutConfig& rollout_cfg,
                             const rewards::LengthPenaltyConfig& penalty, int iteration,
                             std::uint64_t run_seed, Optimizer& optimizer) {
  config.validate();
  penalty.validate();

  // Freeze the reference policy for this iteration, then collect.
  const policy::ParamVector ref_params = params;
  auto collected = collect_iteration(ref_params, spec, fresh_problems, find_problem, buffer,
                                     config, rollout_cfg, penalty, iteration, run_seed);
  if (collected.empty) return collected.outcome;

  // Optimizer reset, then inner steps on the fixed batch.
  optimizer.reset(spec.vocab_size);
  optimizer.momentum = config.momentum;
  for (int step = 0; step < config.inner_steps; ++step)
    params = gradient_step(params, ref_params, spec, collected.batch, config, &optimizer);
  return collected.outcome;
}

TrainOutcome rest_iteration(policy::ParamVector& params, const policy::PolicySpec& spec,
                            std::span<const envs::Problem* const> fresh_problems,
                            const std::function<const envs::Problem*(std::int64_t)>& find_problem,
                            rollout::ReplayBuffer& buffer, double learning_rate,
                            const MirrorConfig& config, const rollout::RolloutConfig& rollout_cfg,
                            const rewards::LengthPenaltyConfig& penalty, int iteration,
                            std::uint64_t run_seed) {
  config.validate();
  penalty.validate();

  const policy::ParamVector ref_params = params;
  auto collected = collect_iteration(ref_params, spec, fresh_problems, find_problem, buffer,
                                     config, rollout_cfg, penalty, iteration, run_seed);
  if (collected.empty) return collected.outcome;

  params = rest_step(params, spec, collected.batch, learning_rate);
  return collected.outcome;
}

}  // namespace minicot::mirror
