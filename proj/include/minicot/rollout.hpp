#pragma once

/**
 * Rollout engine with partial rollouts.
 *
 * Every trajectory gets a per-iteration token budget. Whatever does not
 * reach its stop token within the budget is parked in a replay buffer and
 * resumed in later iterations under the then-current reference policy;
 * resumed spans are stamped with the iteration that generated them, and the
 * training mask covers only the current iteration's segment.
 *
 * Each trajectory owns a dedicated RNG stream (one engine step per token),
 * so segmented generation consumes exactly the randomness a single
 * uninterrupted rollout would: with a budget at least as large as the
 * length cap, results are bit-identical to full rollouts.
 */

#include "minicot/envs.hpp"

#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace minicot::rollout {

struct RepeatConfig {
  int min_pattern_len = 3;
  int min_repeats = 4;

  void validate() const;
};

struct RolloutConfig {
  int k = 8;               // samples per fresh problem
  int budget = 24;         // tokens per trajectory per iteration
  int max_total_len = 48;  // overall cap; hitting it abandons the trajectory
  RepeatConfig repeat;

  void validate() const;
};

struct BufferStats {
  std::int64_t enqueued = 0;
  std::int64_t resumed = 0;
  std::int64_t completed = 0;  // reached stop_token
  std::int64_t repeat_cut = 0;
  std::int64_t abandoned = 0;  // hit max_total_len unfinished
  std::int64_t evicted = 0;    // dropped for capacity
};

/// FIFO of unfinished trajectories awaiting resumption. Oldest entries are
/// evicted first when capacity is exceeded.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 4096);

  /// Throws std::invalid_argument when the trajectory is finished or empty.
  void push(policy::Trajectory traj);

  /// Remove and return all pending trajectories, oldest first.
  std::vector<policy::Trajectory> drain();

  std::size_t size() const { return pending_.size(); }
  bool empty() const { return pending_.empty(); }
  std::size_t capacity() const { return capacity_; }

  const BufferStats& stats() const { return stats_; }
  BufferStats& stats_mut() { return stats_; }

  /// Serialization with full segment provenance (crash recovery).
  void save(const std::string& path) const;
  static ReplayBuffer load(const std::string& path);

 private:
  std::size_t capacity_ = 4096;
  std::deque<policy::Trajectory> pending_;
  BufferStats stats_;
};

/**
 * Earliest index at which some contiguous pattern of length >=
 * min_pattern_len completes its min_repeats-th consecutive occurrence;
 * nullopt when no such pattern exists.
 */
std::optional<int> detect_repetition(const std::vector<policy::Token>& tokens,
                                     int min_pattern_len, int min_repeats);

/// True exactly on tokens whose segment is stamped `current_iteration`.
std::vector<bool> mask_for_loss(const policy::Trajectory& traj, int current_iteration);

/// Stream seed of the trajectory born in `iteration` at fresh-problem
/// `slot`, sample `sample_index`. Shared by the buffered and full-rollout
/// paths so they draw identical randomness.
std::uint64_t trajectory_stream_seed(std::uint64_t run_seed, int iteration, int slot,
                                     int sample_index);

struct RolloutResult {
  /// Trajectories that left the system this iteration: finished naturally,
  /// cut for repetition, or abandoned at the length cap. Loss masks are set
  /// to the current iteration's segment.
  std::vector<policy::Trajectory> done;
  int resumed_count = 0;
  int fresh_count = 0;
};

/**
 * One rollout phase: resume everything pending (budget tokens each, under
 * the current reference policy), then start k fresh samples for each
 * problem in `fresh_problems`. `find_problem` resolves buffered problem ids
 * back to problems; it must cover every id the buffer can hold.
 */
RolloutResult rollout_phase(const policy::ParamVector& ref_params,
                            const policy::PolicySpec& spec,
                            std::span<const envs::Problem* const> fresh_problems,
                            const std::function<const envs::Problem*(std::int64_t)>& find_problem,
                            const RolloutConfig& cfg, ReplayBuffer& buffer, int iteration,
                            std::uint64_t run_seed);

/**
 * Reference path used by equivalence tests: identical to rollout_phase
 * with an empty buffer and budget >= max_total_len, i.e. plain full
 * rollouts with repeat cutting, no segmentation.
 */
RolloutResult full_rollout(const policy::ParamVector& ref_params, const policy::PolicySpec& spec,
                           std::span<const envs::Problem* const> fresh_problems,
                           const RolloutConfig& cfg, int iteration, std::uint64_t run_seed);

}  // namespace minicot::rollout
