#pragma once

/**
 * Deterministic random number generation with named sub-streams.
 *
 * Every random decision in a run is drawn from a stream derived from the
 * single run seed plus a small tuple of integers identifying the call site
 * (e.g. {ROLLOUT, iteration, problem_id, sample}). Streams are independent
 * of evaluation order, so concurrent rollouts and the serial reference path
 * consume identical randomness.
 *
 * All draws go through our own bounded-int / unit-real mappings; the
 * standard <random> distributions are implementation-defined and would break
 * byte-identical reproducibility across toolchains.
 */

#include <cstdint>
#include <initializer_list>
#include <random>

namespace minicot::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Collapse a seed and a tuple of stream labels into one 64-bit stream seed.
inline std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed ^ 0x6d696e69636f74ULL);
  for (std::uint64_t p : path) {
    h = splitmix64(h ^ p);
  }
  return h;
}

/// Stream labels used across the trainer. Values are part of the
/// reproducibility contract: renumbering changes every run.
enum Stream : std::uint64_t {
  ENV_GEN = 1,
  ROLLOUT = 2,
  PROBLEM_DRAW = 3,
  CURATION_GUESS = 4,
  PASS_RATE = 5,
  EVAL = 6,
  L2S = 7,
  ABLATION = 8,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform(std::uint64_t n) {
    // Rejection sampling over the top bits keeps the draw unbiased and
    // identical on every platform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform real in [0, 1) with 53-bit resolution.
  double real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Advance the engine by n steps (resuming a partially consumed stream).
  void skip(std::uint64_t n) { engine_.discard(n); }

 private:
  std::mt19937_64 engine_;
};

inline Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return Rng(derive(seed, path));
}

}  // namespace minicot::rng
