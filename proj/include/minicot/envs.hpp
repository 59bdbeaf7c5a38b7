#pragma once

/**
 * Synthetic verifiable reasoning environments: modular arithmetic chains.
 *
 * A problem is a start value and a sequence of operations (add or multiply
 * by a small constant, mod M). The ground truth is the folded final value.
 * Difficulty is the chain length, so it is a clean scalar, and answers are
 * uniform over [0, M), which keeps the guess-filter statistics analyzable.
 *
 * Token layout inside a vocabulary of size V:
 *   [0, M)              value tokens
 *   [M, M + |ops|)      operation tokens, one per (op, operand) pair
 *   V - 2               answer marker
 *   V - 1               stop token
 *
 * The prompt encodes the chain as [op_1 .. op_d, start]. The feature
 * digest exposes the next unconsumed operation (by counting op tokens the
 * policy has emitted), so the policy can learn shared fold rules:
 * echo the operation, then emit the folded value, window by window. A
 * correct derivation for a d-step chain is o_1 v_1 .. o_d v_d marker v_d
 * stop - longer chains genuinely need longer derivations.
 */

#include "minicot/policy.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace minicot::envs {

using policy::Token;

enum class OpKind { add, mul };

struct ChainOp {
  OpKind kind = OpKind::add;
  int operand = 1;

  bool operator==(const ChainOp&) const = default;
};

int apply_op(int value, ChainOp op, int modulus);

/// Fold the full chain over the start value.
int fold(const std::vector<ChainOp>& ops, int start, int modulus);

struct Problem {
  std::int64_t id = 0;
  int modulus = 10;
  int start_value = 0;
  std::vector<ChainOp> ops;
  std::vector<Token> op_tokens;       // one per op, same order
  std::vector<Token> prompt_tokens;   // [op tokens..., start value token]
  std::vector<Token> ground_truth;    // final value as a single token
  int difficulty = 1;                 // number of chain steps
  std::string domain_tag = "modchain";

  /// First token id of the operation range (op tokens are [op_lo, op_hi)).
  Token op_lo = 0;
  Token op_hi = 0;

  /// Stamped from the policy spec at generation time so a problem is
  /// self-contained for verification.
  Token answer_marker = 14;
  Token stop_token = 15;

  /// Policy-facing view: prompt plus the feature digest function.
  policy::ProblemContext context() const;

  /// The straightforward correct derivation: o_1 v_1 .. o_d v_d marker
  /// final stop. Used as the solvability witness and in tests.
  std::vector<Token> witness_tokens(const policy::PolicySpec& spec) const;
};

struct EnvConfig {
  int modulus = 10;
  std::map<int, int> difficulty_mix;  // chain length -> problem count
  std::vector<ChainOp> op_set = {{OpKind::add, 1}, {OpKind::add, 2}, {OpKind::mul, 2},
                                 {OpKind::mul, 3}};
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when the layout does not fit the vocab.
  void validate(const policy::PolicySpec& spec) const;
};

std::vector<Problem> generate_problem_set(const EnvConfig& config,
                                          const policy::PolicySpec& spec);

/// 1 iff the trajectory finished and the tokens between the answer marker
/// and the stop token equal the ground truth. Unfinished trajectories
/// always score 0.
int verify(const Problem& problem, const policy::Trajectory& traj);

/// A no-CoT guesser: uniform draw from the M-element answer space.
Token guess_answer(const Problem& problem, rng::Rng& rng);

/// Line-delimited problem set I/O for reuse across runs.
void save_problem_set(const std::vector<Problem>& problems, const std::string& path);
std::vector<Problem> load_problem_set(const std::string& path);

}  // namespace minicot::envs
