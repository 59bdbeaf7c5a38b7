#include "minicot/rollout.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace minicot::rollout {

void RepeatConfig::validate() const {
  if (min_pattern_len < 1)
    throw std::invalid_argument("RepeatConfig: min_pattern_len must be >= 1");
  if (min_repeats < 2) throw std::invalid_argument("RepeatConfig: min_repeats must be >= 2");
}

void RolloutConfig::validate() const {
  if (k < 1) throw std::invalid_argument("RolloutConfig: k must be >= 1");
  if (budget < 1) throw std::invalid_argument("RolloutConfig: budget must be >= 1");
  if (max_total_len < 1)
    throw std::invalid_argument("RolloutConfig: max_total_len must be >= 1");
  repeat.validate();
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::push(policy::Trajectory traj) {
  if (traj.finished || traj.repeat_detected)
    throw std::invalid_argument("ReplayBuffer: only unfinished trajectories can be buffered");
  if (traj.tokens.empty())
    throw std::invalid_argument("ReplayBuffer: empty trajectories cannot be buffered");
  pending_.push_back(std::move(traj));
  ++stats_.enqueued;
  while (pending_.size() > capacity_) {
    pending_.pop_front();
    ++stats_.evicted;
  }
}

std::vector<policy::Trajectory> ReplayBuffer::drain() {
  std::vector<policy::Trajectory> out(std::make_move_iterator(pending_.begin()),
                                      std::make_move_iterator(pending_.end()));
  pending_.clear();
  return out;
}

std::optional<int> detect_repetition(const std::vector<policy::Token>& tokens,
                                     int min_pattern_len, int min_repeats) {
  RepeatConfig{min_pattern_len, min_repeats}.validate();
  const int n = static_cast<int>(tokens.size());
  for (int end = min_pattern_len * min_repeats; end <= n; ++end) {
    const int max_len = end / min_repeats;
    for (int len = min_pattern_len; len <= max_len; ++len) {
      // Does the window [end - len*min_repeats, end) consist of min_repeats
      // consecutive copies of the final len tokens?
      const int start = end - len * min_repeats;
      bool ok = true;
      for (int i = start; ok && i < end - len; ++i) ok = tokens[i] == tokens[i + len];
      if (ok) return end;
    }
  }
  return std::nullopt;
}

std::vector<bool> mask_for_loss(const policy::Trajectory& traj, int current_iteration) {
  std::vector<bool> mask(traj.tokens.size(), false);
  for (const auto& seg : traj.segments) {
    if (seg.iteration != current_iteration) continue;
    if (seg.begin < 0 || seg.end > traj.length() || seg.begin > seg.end)
      throw std::invalid_argument("mask_for_loss: malformed segment");
    for (int i = seg.begin; i < seg.end; ++i) mask[i] = true;
  }
  return mask;
}

std::uint64_t trajectory_stream_seed(std::uint64_t run_seed, int iteration, int slot,
                                     int sample_index) {
  return rng::derive(run_seed, {rng::ROLLOUT, static_cast<std::uint64_t>(iteration),
                                static_cast<std::uint64_t>(slot),
                                static_cast<std::uint64_t>(sample_index)});
}

namespace {

void truncate_to(policy::Trajectory& traj, int cut) {
  traj.tokens.resize(cut);
  traj.logprob.resize(cut);
  std::vector<policy::Segment> kept;
  for (auto seg : traj.segments) {
    if (seg.begin >= cut) continue;
    seg.end = std::min(seg.end, cut);
    if (seg.end > seg.begin) kept.push_back(seg);
  }
  traj.segments = std::move(kept);
  traj.finished = false;
}

/// Route a just-extended trajectory to done / pending, applying repeat
/// detection and the overall length cap.
void settle(policy::Trajectory traj, const RolloutConfig& cfg, int iteration,
            BufferStats& stats, ReplayBuffer* buffer, RolloutResult& out) {
  if (const auto cut = detect_repetition(traj.tokens, cfg.repeat.min_pattern_len,
                                         cfg.repeat.min_repeats)) {
    truncate_to(traj, *cut);
    traj.repeat_detected = true;
    ++stats.repeat_cut;
  } else if (traj.finished) {
    ++stats.completed;
  } else if (traj.length() < cfg.max_total_len && buffer != nullptr) {
    buffer->push(std::move(traj));
    return;
  } else {
    ++stats.abandoned;  // out of runway: leaves the system unfinished
  }
  traj.loss_mask = mask_for_loss(traj, iteration);
  out.done.push_back(std::move(traj));
}

}  // namespace

RolloutResult rollout_phase(const policy::ParamVector& ref_params,
                            const policy::PolicySpec& spec,
                            std::span<const envs::Problem* const> fresh_problems,
                            const std::function<const envs::Problem*(std::int64_t)>& find_problem,
                            const RolloutConfig& cfg, ReplayBuffer& buffer, int iteration,
                            std::uint64_t run_seed) {
  cfg.validate();
  RolloutResult out;

  // Resume everything pending before starting fresh work.
  for (auto& traj : buffer.drain()) {
    const envs::Problem* problem = find_problem ? find_problem(traj.problem_id) : nullptr;
    if (problem == nullptr)
      throw std::runtime_error("rollout_phase: buffered problem id has no resolver entry");
    const auto ctx = problem->context();
    rng::Rng rng(traj.stream_seed);
    rng.skip(static_cast<std::uint64_t>(traj.length()));
    policy::extend_trajectory(ref_params, spec, ctx, traj, cfg.budget, cfg.max_total_len,
                              iteration, rng);
    ++out.resumed_count;
    ++buffer.stats_mut().resumed;
    settle(std::move(traj), cfg, iteration, buffer.stats_mut(), &buffer, out);
  }

  for (std::size_t slot = 0; slot < fresh_problems.size(); ++slot) {
    const envs::Problem* problem = fresh_problems[slot];
    const auto ctx = problem->context();
    for (int j = 0; j < cfg.k; ++j) {
      policy::Trajectory traj;
      traj.problem_id = problem->id;
      traj.stream_seed =
          trajectory_stream_seed(run_seed, iteration, static_cast<int>(slot), j);
      rng::Rng rng(traj.stream_seed);
      policy::extend_trajectory(ref_params, spec, ctx, traj, cfg.budget, cfg.max_total_len,
                                iteration, rng);
      ++out.fresh_count;
      settle(std::move(traj), cfg, iteration, buffer.stats_mut(), &buffer, out);
    }
  }
  return out;
}

RolloutResult full_rollout(const policy::ParamVector& ref_params, const policy::PolicySpec& spec,
                           std::span<const envs::Problem* const> fresh_problems,
                           const RolloutConfig& cfg, int iteration, std::uint64_t run_seed) {
  RolloutConfig full_cfg = cfg;
  full_cfg.budget = cfg.max_total_len;
  full_cfg.validate();
  RolloutResult out;
  BufferStats stats;
  for (std::size_t slot = 0; slot < fresh_problems.size(); ++slot) {
    const envs::Problem* problem = fresh_problems[slot];
    const auto ctx = problem->context();
    for (int j = 0; j < cfg.k; ++j) {
      policy::Trajectory traj;
      traj.problem_id = problem->id;
      traj.stream_seed =
          trajectory_stream_seed(run_seed, iteration, static_cast<int>(slot), j);
      rng::Rng rng(traj.stream_seed);
      policy::extend_trajectory(ref_params, spec, ctx, traj, full_cfg.budget,
                                full_cfg.max_total_len, iteration, rng);
      ++out.fresh_count;
      settle(std::move(traj), full_cfg, iteration, stats, nullptr, out);
    }
  }
  return out;
}

void ReplayBuffer::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ReplayBuffer::save: cannot open " + path);
  out << "minicot-buffer v1 capacity=" << capacity_ << "\n";
  out << "stats " << stats_.enqueued << " " << stats_.resumed << " " << stats_.completed << " "
      << stats_.repeat_cut << " " << stats_.abandoned << " " << stats_.evicted << "\n";
  char buf[64];
  for (const auto& traj : pending_) {
    out << "traj " << traj.problem_id << " " << traj.stream_seed << " " << traj.length();
    for (const auto t : traj.tokens) out << " " << t;
    for (const double lp : traj.logprob) {
      std::snprintf(buf, sizeof buf, "%a", lp);
      out << " " << buf;
    }
    out << " segs " << traj.segments.size();
    for (const auto& seg : traj.segments)
      out << " " << seg.begin << " " << seg.end << " " << seg.iteration;
    out << "\n";
  }
  if (!out) throw std::runtime_error("ReplayBuffer::save: write failed for " + path);
}

ReplayBuffer ReplayBuffer::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ReplayBuffer::load: cannot open " + path);
  std::string header;
  std::getline(in, header);
  std::size_t capacity = 0;
  if (std::sscanf(header.c_str(), "minicot-buffer v1 capacity=%zu", &capacity) != 1)
    throw std::runtime_error("ReplayBuffer::load: bad header in " + path);
  ReplayBuffer buffer(capacity);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "stats") {
      ls >> buffer.stats_.enqueued >> buffer.stats_.resumed >> buffer.stats_.completed >>
          buffer.stats_.repeat_cut >> buffer.stats_.abandoned >> buffer.stats_.evicted;
      if (!ls) throw std::runtime_error("ReplayBuffer::load: bad stats in " + path);
    } else if (tag == "traj") {
      policy::Trajectory traj;
      int len = 0;
      ls >> traj.problem_id >> traj.stream_seed >> len;
      if (!ls || len < 1) throw std::runtime_error("ReplayBuffer::load: bad record in " + path);
      traj.tokens.resize(len);
      for (auto& t : traj.tokens) ls >> t;
      traj.logprob.resize(len);
      for (auto& lp : traj.logprob) {
        std::string value;
        ls >> value;
        lp = std::strtod(value.c_str(), nullptr);
      }
      std::size_t nsegs = 0;
      ls >> tag >> nsegs;
      if (!ls || tag != "segs")
        throw std::runtime_error("ReplayBuffer::load: bad segment header in " + path);
      traj.segments.resize(nsegs);
      for (auto& seg : traj.segments) ls >> seg.begin >> seg.end >> seg.iteration;
      if (!ls) throw std::runtime_error("ReplayBuffer::load: bad segments in " + path);
      buffer.pending_.push_back(std::move(traj));
    } else {
      throw std::runtime_error("ReplayBuffer::load: unknown record in " + path);
    }
  }
  return buffer;
}

}  // namespace minicot::rollout
