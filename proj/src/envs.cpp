#include "minicot/envs.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace minicot::envs {

int apply_op(int value, ChainOp op, int modulus) {
  switch (op.kind) {
    case OpKind::add:
      return (value + op.operand) % modulus;
    case OpKind::mul:
      return static_cast<int>((static_cast<long long>(value) * op.operand) % modulus);
  }
  throw std::logic_error("apply_op: unknown op kind");
}

int fold(const std::vector<ChainOp>& ops, int start, int modulus) {
  int v = start % modulus;
  for (ChainOp op : ops) v = apply_op(v, op, modulus);
  return v;
}

namespace {

// Feature digests. Values are arbitrary but fixed: context keys derived
// from them end up in snapshots.
constexpr std::uint64_t kFoldFeature = 0x666f6c64ULL;
constexpr std::uint64_t kDoneFeature = 0x646f6e65ULL;

std::uint64_t next_op_feature(Token op_token) {
  return rng::splitmix64(0x6e657874ULL ^ static_cast<std::uint64_t>(op_token));
}

}  // namespace

policy::ProblemContext Problem::context() const {
  policy::ProblemContext ctx;
  ctx.problem_id = id;
  ctx.prompt_tokens = prompt_tokens;
  const Token lo = op_lo, hi = op_hi;
  const std::vector<Token> ops_seq = op_tokens;
  ctx.features = [lo, hi, ops_seq](std::span<const Token> generated) -> std::uint64_t {
    // After an operation token the policy is expected to fold; otherwise
    // the next unconsumed operation (or "done") is the visible feature.
    if (!generated.empty() && generated.back() >= lo && generated.back() < hi)
      return kFoldFeature;
    std::size_t consumed = 0;
    for (Token t : generated)
      if (t >= lo && t < hi) ++consumed;
    if (consumed < ops_seq.size()) return next_op_feature(ops_seq[consumed]);
    return kDoneFeature;
  };
  return ctx;
}

std::vector<Token> Problem::witness_tokens(const policy::PolicySpec& spec) const {
  std::vector<Token> out;
  int v = start_value % modulus;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    out.push_back(op_tokens[i]);
    v = apply_op(v, ops[i], modulus);
    out.push_back(static_cast<Token>(v));
  }
  out.push_back(spec.answer_marker);
  out.push_back(static_cast<Token>(v));
  out.push_back(spec.stop_token);
  return out;
}

void EnvConfig::validate(const policy::PolicySpec& spec) const {
  if (modulus < 2) throw std::invalid_argument("EnvConfig: modulus must be >= 2");
  if (op_set.empty()) throw std::invalid_argument("EnvConfig: op_set must be non-empty");
  if (modulus + static_cast<int>(op_set.size()) + 2 > spec.vocab_size)
    throw std::invalid_argument(
        "EnvConfig: modulus + op tokens + reserved tokens exceed the vocabulary");
  for (const auto& [d, count] : difficulty_mix) {
    if (d < 1) throw std::invalid_argument("EnvConfig: difficulty labels must be >= 1");
    if (count < 0) throw std::invalid_argument("EnvConfig: difficulty counts must be >= 0");
  }
  for (ChainOp op : op_set)
    if (op.operand < 0) throw std::invalid_argument("EnvConfig: operands must be >= 0");
}

std::vector<Problem> generate_problem_set(const EnvConfig& config,
                                          const policy::PolicySpec& spec) {
  config.validate(spec);
  std::vector<Problem> problems;
  std::int64_t next_id = 0;
  const Token op_lo = static_cast<Token>(config.modulus);
  const Token op_hi = static_cast<Token>(config.modulus + config.op_set.size());
  for (const auto& [d, count] : config.difficulty_mix) {
    for (int i = 0; i < count; ++i) {
      auto rng = rng::stream(config.seed, {rng::ENV_GEN, static_cast<std::uint64_t>(d),
                                           static_cast<std::uint64_t>(i)});
      Problem p;
      p.id = next_id++;
      p.modulus = config.modulus;
      p.difficulty = d;
      p.op_lo = op_lo;
      p.op_hi = op_hi;
      p.answer_marker = spec.answer_marker;
      p.stop_token = spec.stop_token;
      p.start_value = static_cast<int>(rng.uniform(config.modulus));
      for (int s = 0; s < d; ++s) {
        const auto idx = rng.uniform(config.op_set.size());
        p.ops.push_back(config.op_set[idx]);
        p.op_tokens.push_back(static_cast<Token>(op_lo + static_cast<Token>(idx)));
      }
      p.prompt_tokens = p.op_tokens;
      p.prompt_tokens.push_back(static_cast<Token>(p.start_value));
      p.ground_truth = {static_cast<Token>(fold(p.ops, p.start_value, p.modulus))};
      problems.push_back(std::move(p));
    }
  }
  return problems;
}

int verify(const Problem& problem, const policy::Trajectory& traj) {
  if (!traj.finished) return 0;
  const auto& tk = traj.tokens;
  if (tk.empty() || tk.back() != problem.stop_token) return 0;
  const auto marker = std::find(tk.begin(), tk.end(), problem.answer_marker);
  if (marker == tk.end()) return 0;
  if (std::find(marker + 1, tk.end(), problem.answer_marker) != tk.end()) return 0;
  const std::vector<Token> answer(marker + 1, tk.end() - 1);
  return answer == problem.ground_truth ? 1 : 0;
}

Token guess_answer(const Problem& problem, rng::Rng& rng) {
  return static_cast<Token>(rng.uniform(problem.modulus));
}

void save_problem_set(const std::vector<Problem>& problems, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_problem_set: cannot open " + path);
  out << "minicot-problems v1\n";
  for (const Problem& p : problems) {
    out << p.id << " " << p.modulus << " " << p.start_value << " " << p.difficulty << " "
        << p.op_lo << " " << p.op_hi << " " << p.answer_marker << " " << p.stop_token << " "
        << p.domain_tag << " ";
    out << p.ops.size();
    for (std::size_t i = 0; i < p.ops.size(); ++i) {
      out << " " << (p.ops[i].kind == OpKind::add ? "a" : "m") << p.ops[i].operand << ":"
          << p.op_tokens[i];
    }
    out << " gt";
    for (Token t : p.ground_truth) out << ":" << t;
    out << "\n";
  }
}

std::vector<Problem> load_problem_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_problem_set: cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (header != "minicot-problems v1")
    throw std::runtime_error("load_problem_set: bad header in " + path);
  std::vector<Problem> problems;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Problem p;
    std::size_t nops;
    ls >> p.id >> p.modulus >> p.start_value >> p.difficulty >> p.op_lo >> p.op_hi >>
        p.answer_marker >> p.stop_token >> p.domain_tag >> nops;
    for (std::size_t i = 0; i < nops; ++i) {
      std::string item;
      ls >> item;
      const auto colon = item.find(':');
      if (item.size() < 3 || colon == std::string::npos)
        throw std::runtime_error("load_problem_set: bad op record");
      ChainOp op;
      op.kind = item[0] == 'a' ? OpKind::add : OpKind::mul;
      op.operand = std::stoi(item.substr(1, colon - 1));
      p.ops.push_back(op);
      p.op_tokens.push_back(static_cast<Token>(std::stoi(item.substr(colon + 1))));
    }
    std::string gt;
    ls >> gt;
    if (!ls || gt.rfind("gt", 0) != 0)
      throw std::runtime_error("load_problem_set: bad ground truth record");
    std::size_t pos = 2;
    while (pos < gt.size() && gt[pos] == ':') {
      std::size_t end = gt.find(':', pos + 1);
      if (end == std::string::npos) end = gt.size();
      p.ground_truth.push_back(static_cast<Token>(std::stoi(gt.substr(pos + 1, end - pos - 1))));
      pos = end;
    }
    p.prompt_tokens = p.op_tokens;
    p.prompt_tokens.push_back(static_cast<Token>(p.start_value));
    problems.push_back(std::move(p));
  }
  return problems;
}

}  // namespace minicot::envs
