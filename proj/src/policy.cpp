#include "minicot/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace minicot::policy {

void PolicySpec::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("PolicySpec: vocab_size must be >= 2");
  if (context_width < 1) throw std::invalid_argument("PolicySpec: context_width must be >= 1");
  if (sampling_temperature <= 0.0)
    throw std::invalid_argument("PolicySpec: sampling_temperature must be > 0");
  if (answer_marker == stop_token)
    throw std::invalid_argument("PolicySpec: answer_marker and stop_token must differ");
  if (answer_marker < 0 || answer_marker >= vocab_size || stop_token < 0 ||
      stop_token >= vocab_size)
    throw std::invalid_argument("PolicySpec: reserved tokens must be inside the vocabulary");
  if (!std::isfinite(stop_bias))
    throw std::invalid_argument("PolicySpec: stop_bias must be finite");
}

double ParamVector::logit(ContextKey ctx, Token t) const {
  auto it = rows_.find(ctx);
  if (it == rows_.end()) return 0.0;
  return it->second[t];
}

const std::vector<double>* ParamVector::row(ContextKey ctx) const {
  auto it = rows_.find(ctx);
  return it == rows_.end() ? nullptr : &it->second;
}

std::vector<double>& ParamVector::row_mut(ContextKey ctx) {
  auto [it, inserted] = rows_.try_emplace(ctx);
  if (inserted) it->second.assign(vocab_, 0.0);
  return it->second;
}

std::size_t ParamVector::nonzero_count() const {
  std::size_t n = 0;
  for (const auto& [ctx, row] : rows_)
    for (double v : row)
      if (v != 0.0) ++n;
  return n;
}

std::vector<ContextKey> ParamVector::sorted_keys() const {
  std::vector<ContextKey> keys;
  keys.reserve(rows_.size());
  for (const auto& [ctx, row] : rows_) keys.push_back(ctx);
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::vector<double>& SparseDelta::row_mut(ContextKey ctx) {
  auto [it, inserted] = rows_.try_emplace(ctx);
  if (inserted) it->second.assign(vocab_, 0.0);
  return it->second;
}

double SparseDelta::value(ContextKey ctx, Token t) const {
  auto it = rows_.find(ctx);
  if (it == rows_.end()) return 0.0;
  return it->second[t];
}

void SparseDelta::axpy(double scale, const SparseDelta& other) {
  for (const auto& [ctx, src] : other.rows_) {
    auto& dst = row_mut(ctx);
    for (int t = 0; t < vocab_; ++t) dst[t] += scale * src[t];
  }
}

void SparseDelta::apply_to(ParamVector& params, double scale) const {
  for (const auto& [ctx, src] : rows_) {
    auto& dst = params.row_mut(ctx);
    for (int t = 0; t < vocab_; ++t) dst[t] += scale * src[t];
  }
}

double SparseDelta::max_abs() const {
  double m = 0.0;
  for (const auto& [ctx, row] : rows_)
    for (double v : row) m = std::max(m, std::abs(v));
  return m;
}

namespace {

constexpr std::uint64_t kPadToken = 0xffffffffffff50adULL;

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return rng::splitmix64(h ^ v); }

}  // namespace

ContextKey context_key(const PolicySpec& spec, const ProblemContext& ctx,
                       std::span<const Token> generated) {
  std::uint64_t h = mix(0x77696e646f77ULL, ctx.feature_digest(generated));
  const int c = spec.context_width;
  const auto& prompt = ctx.prompt_tokens;
  const long total = static_cast<long>(prompt.size()) + static_cast<long>(generated.size());
  for (long pos = total - c; pos < total; ++pos) {
    std::uint64_t v;
    if (pos < 0) {
      v = kPadToken;
    } else if (pos < static_cast<long>(prompt.size())) {
      v = static_cast<std::uint64_t>(prompt[pos]);
    } else {
      v = static_cast<std::uint64_t>(generated[pos - prompt.size()]);
    }
    h = mix(h, v);
  }
  return h;
}

std::vector<double> next_token_dist_at(const ParamVector& params, const PolicySpec& spec,
                                       ContextKey key) {
  const int v = spec.vocab_size;
  std::vector<double> probs(v);
  const std::vector<double>* row = params.row(key);
  if (row == nullptr && spec.stop_bias == 0.0) {
    std::fill(probs.begin(), probs.end(), 1.0 / v);
    return probs;
  }
  const double inv_t = 1.0 / spec.sampling_temperature;
  double max_logit = -1e300;
  for (int t = 0; t < v; ++t) {
    double l = row == nullptr ? 0.0 : (*row)[t];
    if (t == spec.stop_token) l += spec.stop_bias;
    if (!std::isfinite(l)) throw std::runtime_error("next_token_dist: non-finite logit");
    probs[t] = l * inv_t;
    max_logit = std::max(max_logit, probs[t]);
  }
  double z = 0.0;
  for (int t = 0; t < v; ++t) {
    probs[t] = std::exp(probs[t] - max_logit);
    z += probs[t];
  }
  for (int t = 0; t < v; ++t) probs[t] /= z;
  return probs;
}

std::vector<double> next_token_dist(const ParamVector& params, const PolicySpec& spec,
                                    const ProblemContext& ctx, std::span<const Token> generated) {
  return next_token_dist_at(params, spec, context_key(spec, ctx, generated));
}

void extend_trajectory(const ParamVector& params, const PolicySpec& spec,
                       const ProblemContext& ctx, Trajectory& traj, int budget, int max_total,
                       int iteration, rng::Rng& rng) {
  if (budget < 1) throw std::invalid_argument("extend_trajectory: budget must be >= 1");
  if (traj.finished) return;
  const int begin = traj.length();
  int emitted = 0;
  while (emitted < budget && traj.length() < max_total) {
    const auto probs = next_token_dist(params, spec, ctx, traj.tokens);
    // Inverse-CDF draw; the final bucket absorbs rounding so every draw
    // lands on a valid token.
    const double u = rng.real();
    double acc = 0.0;
    Token tok = spec.vocab_size - 1;
    for (int t = 0; t < spec.vocab_size; ++t) {
      acc += probs[t];
      if (u < acc) {
        tok = t;
        break;
      }
    }
    traj.tokens.push_back(tok);
    traj.logprob.push_back(std::log(probs[tok]));
    ++emitted;
    if (tok == spec.stop_token) break;
  }
  if (emitted > 0) traj.segments.push_back({begin, begin + emitted, iteration});
  // stop_token terminates generation for good; answer structure (exactly
  // one marker before it) is the verifier's business, not the sampler's.
  if (!traj.tokens.empty() && traj.tokens.back() == spec.stop_token) traj.finished = true;
}

Trajectory sample_sequence(const ParamVector& params, const PolicySpec& spec,
                           const ProblemContext& ctx, int max_tokens, rng::Rng& rng) {
  if (max_tokens < 1) throw std::invalid_argument("sample_sequence: max_tokens must be >= 1");
  Trajectory traj;
  traj.problem_id = ctx.problem_id;
  extend_trajectory(params, spec, ctx, traj, max_tokens, max_tokens, 0, rng);
  traj.loss_mask.assign(traj.tokens.size(), true);
  return traj;
}

namespace {

void check_tokens(const PolicySpec& spec, const Trajectory& traj) {
  for (Token t : traj.tokens)
    if (t < 0 || t >= spec.vocab_size)
      throw std::invalid_argument("trajectory token outside vocabulary");
  if (!traj.logprob.empty() && traj.logprob.size() != traj.tokens.size())
    throw std::invalid_argument("trajectory logprob length mismatch");
}

}  // namespace

double log_prob(const ParamVector& params, const PolicySpec& spec, const ProblemContext& ctx,
                const Trajectory& traj, const std::vector<bool>& mask) {
  check_tokens(spec, traj);
  double lp = 0.0;
  for (int i = 0; i < traj.length(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const auto probs =
        next_token_dist(params, spec, ctx, std::span<const Token>(traj.tokens.data(), i));
    lp += std::log(probs[traj.tokens[i]]);
  }
  return lp;
}

void accumulate_grad_log_prob(const ParamVector& params, const PolicySpec& spec,
                              const ProblemContext& ctx, const Trajectory& traj, double scale,
                              SparseDelta& out, const std::vector<bool>& mask) {
  check_tokens(spec, traj);
  const double inv_t = scale / spec.sampling_temperature;
  for (int i = 0; i < traj.length(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const ContextKey key =
        context_key(spec, ctx, std::span<const Token>(traj.tokens.data(), i));
    const auto probs = next_token_dist_at(params, spec, key);
    auto& row = out.row_mut(key);
    for (int t = 0; t < spec.vocab_size; ++t) row[t] -= inv_t * probs[t];
    row[traj.tokens[i]] += inv_t;
  }
}

SparseDelta grad_log_prob(const ParamVector& params, const PolicySpec& spec,
                          const ProblemContext& ctx, const Trajectory& traj,
                          const std::vector<bool>& mask) {
  SparseDelta g(spec.vocab_size);
  accumulate_grad_log_prob(params, spec, ctx, traj, 1.0, g, mask);
  return g;
}

ParamVector merge(const ParamVector& a, const ParamVector& b, double weight) {
  if (!(weight >= 0.0 && weight <= 1.0))
    throw std::invalid_argument("merge: weight must lie in [0, 1]");
  const int vocab = std::max(a.vocab(), b.vocab());
  ParamVector out(vocab);
  for (const auto& [ctx, row] : a.rows()) {
    auto& dst = out.row_mut(ctx);
    for (int t = 0; t < static_cast<int>(row.size()); ++t) dst[t] += weight * row[t];
  }
  for (const auto& [ctx, row] : b.rows()) {
    auto& dst = out.row_mut(ctx);
    for (int t = 0; t < static_cast<int>(row.size()); ++t) dst[t] += (1.0 - weight) * row[t];
  }
  return out;
}

void save_snapshot(const ParamVector& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_snapshot: cannot open " + path);
  out << "minicot-policy v1 vocab=" << params.vocab() << "\n";
  char buf[64];
  for (ContextKey ctx : params.sorted_keys()) {
    const auto& row = *params.row(ctx);
    for (int t = 0; t < params.vocab(); ++t) {
      if (row[t] == 0.0) continue;
      std::snprintf(buf, sizeof buf, "%a", row[t]);
      out << std::hex << ctx << std::dec << " " << t << " " << buf << "\n";
    }
  }
  if (!out) throw std::runtime_error("save_snapshot: write failed for " + path);
}

ParamVector load_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_snapshot: cannot open " + path);
  std::string header;
  std::getline(in, header);
  int vocab = 0;
  if (std::sscanf(header.c_str(), "minicot-policy v1 vocab=%d", &vocab) != 1 || vocab < 2)
    throw std::runtime_error("load_snapshot: bad header in " + path);
  ParamVector params(vocab);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ContextKey ctx;
    int token;
    std::string value;
    ls >> std::hex >> ctx >> std::dec >> token >> value;
    if (!ls || token < 0 || token >= vocab)
      throw std::runtime_error("load_snapshot: bad record in " + path);
    params.set(ctx, token, std::strtod(value.c_str(), nullptr));
  }
  return params;
}

}  // namespace minicot::policy
