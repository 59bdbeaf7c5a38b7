#include "minicot/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace minicot::rewards {

void LengthPenaltyConfig::validate() const {
  if (!std::isfinite(weight) || weight < 0.0)
    throw std::invalid_argument("LengthPenaltyConfig: weight must be finite and >= 0");
  if (warmup_iterations < 0)
    throw std::invalid_argument("LengthPenaltyConfig: warmup_iterations must be >= 0");
  if (!(repeat_penalty <= 0.0))
    throw std::invalid_argument("LengthPenaltyConfig: repeat_penalty must be <= 0");
}

std::vector<double> length_rewards(const std::vector<LengthSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("length_rewards: empty sample group");
  int min_len = samples.front().length;
  int max_len = samples.front().length;
  for (const auto& s : samples) {
    if (s.length < 1) throw std::invalid_argument("length_rewards: lengths must be >= 1");
    min_len = std::min(min_len, s.length);
    max_len = std::max(max_len, s.length);
  }
  std::vector<double> out(samples.size(), 0.0);
  if (max_len == min_len) return out;
  const double span = max_len - min_len;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double lambda = 0.5 - (samples[i].length - min_len) / span;
    out[i] = samples[i].correct ? lambda : std::min(0.0, lambda);
  }
  return out;
}

double warmup_scale(int iteration, const LengthPenaltyConfig& config) {
  if (iteration < 0) throw std::invalid_argument("warmup_scale: iteration must be >= 0");
  return iteration < config.warmup_iterations ? 0.0 : 1.0;
}

double combined_reward(int base, double len_reward, bool repeat_detected, int iteration,
                       const LengthPenaltyConfig& config) {
  double r = base + warmup_scale(iteration, config) * config.weight * len_reward;
  if (repeat_detected) r += config.repeat_penalty;
  return r;
}

}  // namespace minicot::rewards
