#pragma once

/**
 * Tabular autoregressive token policy.
 *
 * The policy is a softmax over per-context logit rows. A context is the
 * pair (problem feature digest, window of the last `context_width` tokens
 * of prompt + generation), collapsed to a 64-bit key. Missing rows are
 * all-zero, i.e. uniform over the vocabulary.
 *
 * Everything here is exact: sampling, log-probabilities and their analytic
 * gradients all describe the same temperature-scaled softmax, so gradient
 * checks against finite differences hold to float precision.
 */

#include "minicot/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace minicot::policy {

using Token = std::int32_t;
using ContextKey = std::uint64_t;

struct PolicySpec {
  int vocab_size = 16;
  int context_width = 3;
  Token answer_marker = 14;
  Token stop_token = 15;
  double sampling_temperature = 1.0;

  /// Additive prior on the stop token's logit, applied in every context.
  /// A positive bias makes the untrained policy answer short (a stand-in
  /// for a short-response warm start); learned logits can override it
  /// per context, since it is just a constant shift of the stop logit.
  double stop_bias = 0.0;

  /// Throws std::invalid_argument on malformed specs.
  void validate() const;
};

/// Problem-side feature digest: maps the generated prefix to a 64-bit
/// summary that is folded into every context key. Environments use this to
/// expose e.g. the next unconsumed operation of a problem.
using FeatureFn = std::function<std::uint64_t(std::span<const Token>)>;

/// What the policy needs to know about the problem it is generating for.
struct ProblemContext {
  std::int64_t problem_id = -1;
  std::vector<Token> prompt_tokens;
  FeatureFn features;  // null => constant digest

  std::uint64_t feature_digest(std::span<const Token> generated) const {
    return features ? features(generated) : 0;
  }
};

/// One contiguous span of tokens generated in a single iteration.
struct Segment {
  int begin = 0;
  int end = 0;        // exclusive
  int iteration = 0;  // stamp of the iteration that generated this span
};

struct Trajectory {
  std::int64_t problem_id = -1;
  std::vector<Token> tokens;      // generated tokens only (no prompt)
  std::vector<double> logprob;    // per token, recorded at generation time
  std::vector<Segment> segments;  // partition of [0, length)
  std::vector<bool> loss_mask;    // set by the rollout engine
  bool finished = false;          // ended with stop_token (vs. truncated)
  bool repeat_detected = false;   // cut early by repetition detection

  /// Seed of the dedicated RNG stream this trajectory draws from. One
  /// engine step per token, so a resumption can fast-forward to exactly
  /// where generation left off.
  std::uint64_t stream_seed = 0;

  int length() const { return static_cast<int>(tokens.size()); }
};

/**
 * Sparse logit table. Rows are dense vectors of size vocab so softmax and
 * gradient accumulation touch one hash lookup per context.
 */
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(int vocab) : vocab_(vocab) {}

  int vocab() const { return vocab_; }

  /// Logit for (ctx, token); 0.0 when the row or entry is missing.
  double logit(ContextKey ctx, Token t) const;

  /// Row for ctx, or nullptr when absent.
  const std::vector<double>* row(ContextKey ctx) const;

  /// Row for ctx, created zero-filled when absent.
  std::vector<double>& row_mut(ContextKey ctx);

  void set(ContextKey ctx, Token t, double value) { row_mut(ctx)[t] = value; }
  void add(ContextKey ctx, Token t, double delta) { row_mut(ctx)[t] += delta; }

  std::size_t context_count() const { return rows_.size(); }

  /// Number of stored (context, token) entries with a nonzero logit.
  std::size_t nonzero_count() const;

  const std::unordered_map<ContextKey, std::vector<double>>& rows() const { return rows_; }

  /// Contexts in ascending key order (serialization, deterministic dumps).
  std::vector<ContextKey> sorted_keys() const;

 private:
  int vocab_ = 0;
  std::unordered_map<ContextKey, std::vector<double>> rows_;
};

/// Sparse gradient / update, structurally identical to ParamVector.
class SparseDelta {
 public:
  explicit SparseDelta(int vocab) : vocab_(vocab) {}

  std::vector<double>& row_mut(ContextKey ctx);
  const std::unordered_map<ContextKey, std::vector<double>>& rows() const { return rows_; }
  int vocab() const { return vocab_; }

  double value(ContextKey ctx, Token t) const;

  /// this += scale * other
  void axpy(double scale, const SparseDelta& other);

  /// params += scale * this
  void apply_to(ParamVector& params, double scale) const;

  void clear() { rows_.clear(); }
  bool empty() const { return rows_.empty(); }

  /// Max |entry|; 0 when empty.
  double max_abs() const;

 private:
  int vocab_ = 0;
  std::unordered_map<ContextKey, std::vector<double>> rows_;
};

/// Context key for the next token after `generated`, given the problem.
/// The key hashes the feature digest with the last context_width tokens of
/// prompt + generated (left-padded when shorter).
ContextKey context_key(const PolicySpec& spec, const ProblemContext& ctx,
                       std::span<const Token> generated);

/// Temperature-scaled softmax over the row at `key`. Entries are >= 0 and
/// sum to 1 within 1e-9. Throws std::runtime_error on non-finite logits.
std::vector<double> next_token_dist_at(const ParamVector& params, const PolicySpec& spec,
                                       ContextKey key);

std::vector<double> next_token_dist(const ParamVector& params, const PolicySpec& spec,
                                    const ProblemContext& ctx, std::span<const Token> generated);

/**
 * Append up to `budget` freshly sampled tokens to `traj`, stopping early at
 * stop_token or when the trajectory reaches `max_total` tokens. Records a
 * new segment stamped with `iteration` and per-token log-probs under
 * `params`. Existing tokens are never regenerated.
 */
void extend_trajectory(const ParamVector& params, const PolicySpec& spec,
                       const ProblemContext& ctx, Trajectory& traj, int budget, int max_total,
                       int iteration, rng::Rng& rng);

/// Fresh trajectory of at most max_tokens tokens, one segment, stamp 0.
Trajectory sample_sequence(const ParamVector& params, const PolicySpec& spec,
                           const ProblemContext& ctx, int max_tokens, rng::Rng& rng);

/**
 * Log-probability of the trajectory's tokens under `params`, optionally
 * restricted to positions where `mask` is true (empty mask = all tokens).
 * Throws std::invalid_argument when a token is outside the vocabulary.
 */
double log_prob(const ParamVector& params, const PolicySpec& spec, const ProblemContext& ctx,
                const Trajectory& traj, const std::vector<bool>& mask = {});

/**
 * Analytic gradient of log_prob with respect to the logits: for each
 * visited context, (indicator of taken token - probability vector) scaled
 * by 1 / temperature. Accumulates `scale` times the gradient into `out`.
 */
void accumulate_grad_log_prob(const ParamVector& params, const PolicySpec& spec,
                              const ProblemContext& ctx, const Trajectory& traj, double scale,
                              SparseDelta& out, const std::vector<bool>& mask = {});

SparseDelta grad_log_prob(const ParamVector& params, const PolicySpec& spec,
                          const ProblemContext& ctx, const Trajectory& traj,
                          const std::vector<bool>& mask = {});

/// Entry-wise weight*a + (1-weight)*b over the union of keys (missing rows
/// are zero). Throws std::invalid_argument when weight is outside [0, 1].
ParamVector merge(const ParamVector& a, const ParamVector& b, double weight);

/// Snapshot I/O. One record per nonzero (context, token, logit); logits are
/// written as hex floats so the round trip is bit-exact.
void save_snapshot(const ParamVector& params, const std::string& path);
ParamVector load_snapshot(const std::string& path);

}  // namespace minicot::policy
