#include "minicot/sampling.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace minicot::sampling {

DifficultyTracker::DifficultyTracker(double prior_success_rate) : prior_(prior_success_rate) {
  if (!(prior_ >= 0.0 && prior_ <= 1.0))
    throw std::invalid_argument("DifficultyTracker: prior must lie in [0, 1]");
}

void DifficultyTracker::update(std::int64_t problem_id, bool success) {
  auto& s = stats_[problem_id];
  s.attempts += 1;
  if (success) s.successes += 1;
}

double DifficultyTracker::success_rate(std::int64_t problem_id) const {
  const auto it = stats_.find(problem_id);
  if (it == stats_.end() || it->second.attempts == 0) return prior_;
  return static_cast<double>(it->second.successes) / static_cast<double>(it->second.attempts);
}

const ProblemStats* DifficultyTracker::stats(std::int64_t problem_id) const {
  const auto it = stats_.find(problem_id);
  return it == stats_.end() ? nullptr : &it->second;
}

void DifficultyTracker::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("DifficultyTracker::save: cannot open " + path);
  out << "minicot-tracker v1 prior=" << prior_ << "\n";
  for (const auto& [id, s] : stats_)
    out << id << " " << s.attempts << " " << s.successes << "\n";
  if (!out) throw std::runtime_error("DifficultyTracker::save: write failed for " + path);
}

DifficultyTracker DifficultyTracker::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("DifficultyTracker::load: cannot open " + path);
  std::string header;
  std::getline(in, header);
  double prior = 0.0;
  if (std::sscanf(header.c_str(), "minicot-tracker v1 prior=%lf", &prior) != 1)
    throw std::runtime_error("DifficultyTracker::load: bad header in " + path);
  DifficultyTracker tracker(prior);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::int64_t id, attempts, successes;
    ls >> id >> attempts >> successes;
    if (!ls || successes > attempts || attempts < 0 || successes < 0)
      throw std::runtime_error("DifficultyTracker::load: bad record in " + path);
    auto& s = tracker.stats_[id];
    s.attempts = attempts;
    s.successes = successes;
  }
  return tracker;
}

std::vector<double> prioritized_weights(const DifficultyTracker& tracker,
                                        const std::vector<std::int64_t>& problem_ids) {
  if (problem_ids.empty())
    throw std::invalid_argument("prioritized_weights: empty problem id list");
  std::vector<double> weights(problem_ids.size());
  double total = 0.0;
  for (std::size_t i = 0; i < problem_ids.size(); ++i) {
    weights[i] = 1.0 - tracker.success_rate(problem_ids[i]);
    total += weights[i];
  }
  if (total <= 0.0) {
    std::fill(weights.begin(), weights.end(), 1.0 / problem_ids.size());
    return weights;
  }
  for (double& w : weights) w /= total;
  return weights;
}

void CurriculumSchedule::validate() const {
  if (warmup_iterations < 0)
    throw std::invalid_argument("CurriculumSchedule: warmup_iterations must be >= 0");
}

std::vector<std::size_t> curriculum_filter(const std::vector<envs::Problem>& problems,
                                           int iteration, const CurriculumSchedule& schedule) {
  schedule.validate();
  if (problems.empty()) throw std::invalid_argument("curriculum_filter: empty problem set");
  std::vector<std::size_t> eligible;
  if (iteration < schedule.warmup_iterations) {
    eligible.resize(problems.size());
    for (std::size_t i = 0; i < problems.size(); ++i) eligible[i] = i;
    return eligible;
  }
  for (std::size_t i = 0; i < problems.size(); ++i)
    if (problems[i].difficulty >= schedule.hard_threshold) eligible.push_back(i);
  if (!eligible.empty()) return eligible;
  // Threshold excludes everything: fall back to the hardest stratum.
  int max_difficulty = problems.front().difficulty;
  for (const auto& p : problems) max_difficulty = std::max(max_difficulty, p.difficulty);
  for (std::size_t i = 0; i < problems.size(); ++i)
    if (problems[i].difficulty == max_difficulty) eligible.push_back(i);
  return eligible;
}

double estimate_pass_rate(const policy::ParamVector& params, const policy::PolicySpec& spec,
                          const envs::Problem& problem, int attempts, double temperature,
                          std::uint64_t seed, int max_tokens) {
  if (attempts < 1) throw std::invalid_argument("estimate_pass_rate: attempts must be >= 1");
  if (max_tokens < 1) throw std::invalid_argument("estimate_pass_rate: max_tokens must be >= 1");
  policy::PolicySpec probe_spec = spec;
  probe_spec.sampling_temperature = temperature;
  probe_spec.validate();
  const auto ctx = problem.context();
  int passed = 0;
  for (int a = 0; a < attempts; ++a) {
    auto rng = rng::stream(seed, {rng::PASS_RATE, static_cast<std::uint64_t>(problem.id),
                                  static_cast<std::uint64_t>(a)});
    const auto traj = policy::sample_sequence(params, probe_spec, ctx, max_tokens, rng);
    passed += envs::verify(problem, traj);
  }
  return static_cast<double>(passed) / attempts;
}

}  // namespace minicot::sampling
