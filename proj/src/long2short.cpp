#include "minicot/long2short.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "minicot/rng.hpp"
#include "minicot/rollout.hpp"

namespace minicot::long2short {

void Long2ShortConfig::validate() const {
  if (srs_samples < 1)
    throw std::invalid_argument("Long2ShortConfig: srs_samples must be >= 1");
  if (!(dpo_length_ratio > 1.0))
    throw std::invalid_argument("Long2ShortConfig: dpo_length_ratio must be > 1");
  if (!(dpo_beta > 0.0))
    throw std::invalid_argument("Long2ShortConfig: dpo_beta must be > 0");
  if (short_budget < 1)
    throw std::invalid_argument("Long2ShortConfig: short_budget must be >= 1");
  if (!(merge_weight >= 0.0 && merge_weight <= 1.0))
    throw std::invalid_argument("Long2ShortConfig: merge_weight must be in [0, 1]");
  if (!(std::isfinite(source_lambda) && source_lambda >= 0.0))
    throw std::invalid_argument("Long2ShortConfig: source_lambda must be finite and >= 0");
}

policy::ParamVector merge_policies(const policy::ParamVector& long_policy,
                                   const policy::ParamVector& short_policy,
                                   const Long2ShortConfig& config) {
  config.validate();
  return policy::merge(long_policy, short_policy, config.merge_weight);
}

std::optional<policy::Trajectory> shortest_rejection_sample(const policy::ParamVector& params,
                                                            const policy::PolicySpec& spec,
                                                            const envs::Problem& problem, int n,
                                                            int budget, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("shortest_rejection_sample: n must be >= 1");
  if (budget < 1) throw std::invalid_argument("shortest_rejection_sample: budget must be >= 1");
  const auto ctx = problem.context();
  std::optional<policy::Trajectory> best;
  for (int j = 0; j < n; ++j) {
    auto rng = rng::stream(seed, {rng::L2S, static_cast<std::uint64_t>(problem.id),
                                  static_cast<std::uint64_t>(j)});
    auto traj = policy::sample_sequence(params, spec, ctx, budget, rng);
    if (envs::verify(problem, traj) != 1) continue;
    if (!best || traj.length() < best->length()) best = std::move(traj);
  }
  return best;
}

policy::SparseDelta sft_gradient(const policy::ParamVector& params,
                                 const policy::PolicySpec& spec,
                                 const std::vector<SftExample>& examples) {
  if (examples.empty()) throw std::invalid_argument("sft_gradient: examples must be non-empty");
  policy::SparseDelta grad(spec.vocab_size);
  const double scale = 1.0 / static_cast<double>(examples.size());
  for (const auto& ex : examples)
    policy::accumulate_grad_log_prob(params, spec, ex.context, ex.trajectory, scale, grad);
  return grad;
}

policy::ParamVector sft_on_samples(const policy::ParamVector& params,
                                   const policy::PolicySpec& spec,
                                   const std::vector<SftExample>& examples, double learning_rate,
                                   int steps) {
  if (examples.empty())
    throw std::invalid_argument("sft_on_samples: examples must be non-empty");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("sft_on_samples: learning_rate must be > 0");
  if (steps < 0) throw std::invalid_argument("sft_on_samples: steps must be >= 0");
  policy::ParamVector out = params;
  for (int s = 0; s < steps; ++s) sft_gradient(out, spec, examples).apply_to(out, learning_rate);
  return out;
}

std::vector<DpoPair> build_dpo_pairs(const policy::ProblemContext& ctx,
                                     const std::vector<std::pair<policy::Trajectory, bool>>& samples,
                                     const Long2ShortConfig& config) {
  config.validate();
  const std::pair<policy::Trajectory, bool>* positive = nullptr;
  for (const auto& s : samples)
    if (s.second && (positive == nullptr || s.first.length() < positive->first.length()))
      positive = &s;
  std::vector<DpoPair> pairs;
  if (positive == nullptr) return pairs;

  const auto pos_len = static_cast<double>(positive->first.length());
  for (const auto& s : samples) {
    if (&s == positive) continue;
    const auto len = static_cast<double>(s.first.length());
    const bool wrong_and_longer = !s.second && len > pos_len;
    const bool correct_but_verbose = s.second && len >= config.dpo_length_ratio * pos_len;
    if (!wrong_and_longer && !correct_but_verbose) continue;
    DpoPair pair;
    pair.context = ctx;
    pair.positive = positive->first;
    pair.negative = s.first;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

namespace {

double pair_margin(const policy::ParamVector& params, const policy::ParamVector& ref_params,
                   const policy::PolicySpec& spec, const DpoPair& pair) {
  const double pos = policy::log_prob(params, spec, pair.context, pair.positive) -
                     policy::log_prob(ref_params, spec, pair.context, pair.positive);
  const double neg = policy::log_prob(params, spec, pair.context, pair.negative) -
                     policy::log_prob(ref_params, spec, pair.context, pair.negative);
  return pos - neg;
}

}  // namespace

double dpo_loss(const policy::ParamVector& params, const policy::ParamVector& ref_params,
                const policy::PolicySpec& spec, const std::vector<DpoPair>& pairs, double beta) {
  if (pairs.empty()) throw std::invalid_argument("dpo_loss: pairs must be non-empty");
  if (!(beta > 0.0)) throw std::invalid_argument("dpo_loss: beta must be > 0");
  double total = 0.0;
  for (const auto& pair : pairs) {
    const double m = beta * pair_margin(params, ref_params, spec, pair);
    // -log sigmoid(m) = log(1 + exp(-m)), computed stably on both sides.
    total += m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
  }
  return total / static_cast<double>(pairs.size());
}

policy::SparseDelta dpo_gradient(const policy::ParamVector& params,
                                 const policy::ParamVector& ref_params,
                                 const policy::PolicySpec& spec, const std::vector<DpoPair>& pairs,
                                 double beta) {
  if (pairs.empty()) throw std::invalid_argument("dpo_gradient: pairs must be non-empty");
  if (!(beta > 0.0)) throw std::invalid_argument("dpo_gradient: beta must be > 0");
  policy::SparseDelta grad(spec.vocab_size);
  const double scale = 1.0 / static_cast<double>(pairs.size());
  for (const auto& pair : pairs) {
    if (pair.positive.tokens == pair.negative.tokens) continue;  // margin identically zero
    const double m = beta * pair_margin(params, ref_params, spec, pair);
    // d/dtheta of -log sigmoid(beta*margin) = -sigmoid(-m) * beta * d(margin).
    const double coeff = -scale * beta / (1.0 + std::exp(m));
    policy::accumulate_grad_log_prob(params, spec, pair.context, pair.positive, coeff, grad);
    policy::accumulate_grad_log_prob(params, spec, pair.context, pair.negative, -coeff, grad);
  }
  return grad;
}

policy::ParamVector dpo_update(const policy::ParamVector& params,
                               const policy::ParamVector& ref_params,
                               const policy::PolicySpec& spec, const std::vector<DpoPair>& pairs,
                               double beta, double learning_rate) {
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("dpo_update: learning_rate must be > 0");
  policy::ParamVector out = params;
  dpo_gradient(params, ref_params, spec, pairs, beta).apply_to(out, -learning_rate);
  return out;
}

L2sRlResult long2short_rl(const policy::ParamVector& params, const policy::PolicySpec& spec,
                          const std::vector<envs::Problem>& problems,
                          const Long2ShortConfig& config, const mirror::MirrorConfig& mirror_cfg,
                          const rewards::LengthPenaltyConfig& penalty, std::uint64_t seed) {
  config.validate();
  mirror_cfg.validate();
  penalty.validate();
  if (problems.empty())
    throw std::invalid_argument("long2short_rl: problems must be non-empty");

  rewards::LengthPenaltyConfig eager = penalty;
  eager.warmup_iterations = 0;  // penalty bites from the first iteration

  rollout::RolloutConfig rcfg;
  rcfg.k = mirror_cfg.k;
  rcfg.budget = config.short_budget;
  rcfg.max_total_len = config.short_budget;  // one segment; nothing is buffered

  std::vector<const envs::Problem*> fresh;
  std::map<std::int64_t, const envs::Problem*> by_id;
  for (const auto& p : problems) {
    fresh.push_back(&p);
    by_id[p.id] = &p;
  }
  const auto find = [&by_id](std::int64_t id) -> const envs::Problem* {
    const auto it = by_id.find(id);
    return it == by_id.end() ? nullptr : it->second;
  };

  L2sRlResult result;
  result.params = params;
  rollout::ReplayBuffer buffer(16);
  mirror::Optimizer optimizer;
  optimizer.momentum = mirror_cfg.momentum;
  const auto run_seed = rng::derive(seed, {rng::L2S});
  for (int it = 0; it < mirror_cfg.iterations; ++it) {
    const auto outcome = mirror::train_iteration(result.params, spec, fresh, find, buffer,
                                                 mirror_cfg, rcfg, eager, it, run_seed, optimizer);
    result.curve.push_back({it, outcome.accuracy, outcome.mean_len});
  }
  return result;
}

void save_efficiency_csv(const std::vector<EfficiencyPoint>& curve, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("save_efficiency_csv: cannot open " + path);
  std::fprintf(f, "iteration,accuracy,mean_len\n");
  for (const auto& p : curve)
    std::fprintf(f, "%d,%.6f,%.6f\n", p.iteration, p.accuracy, p.mean_len);
  std::fclose(f);
}

}  // namespace minicot::long2short
