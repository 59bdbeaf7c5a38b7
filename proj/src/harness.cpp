#include "minicot/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "minicot/rng.hpp"

namespace minicot::harness {

using nlohmann::json;

const char* sampling_mode_name(SamplingMode mode) {
  switch (mode) {
    case SamplingMode::uniform: return "uniform";
    case SamplingMode::curriculum: return "curriculum";
    case SamplingMode::prioritized: return "prioritized";
    case SamplingMode::curriculum_prioritized: return "curriculum+prioritized";
  }
  return "?";
}

SamplingMode sampling_mode_from(const std::string& name) {
  if (name == "uniform") return SamplingMode::uniform;
  if (name == "curriculum") return SamplingMode::curriculum;
  if (name == "prioritized") return SamplingMode::prioritized;
  if (name == "curriculum+prioritized") return SamplingMode::curriculum_prioritized;
  throw std::invalid_argument("unknown sampling mode: " + name);
}

void SelectionConfig::validate() const {
  if (problems_per_iteration < 1)
    throw std::invalid_argument("SelectionConfig: problems_per_iteration must be >= 1");
  schedule.validate();
  if (!(tracker_prior >= 0.0 && tracker_prior <= 1.0))
    throw std::invalid_argument("SelectionConfig: tracker_prior must be in [0, 1]");
}

void RunConfig::validate() const {
  spec.validate();
  env.validate(spec);
  mirror.validate();
  penalty.validate();
  rollout.validate();
  if (buffer_capacity < 1) throw std::invalid_argument("RunConfig: buffer_capacity must be >= 1");
  selection.validate();
  curation.validate();
  long2short.validate();
  if (out_dir.empty()) throw std::invalid_argument("RunConfig: out_dir must be non-empty");
}

namespace {

void reject_unknown_keys(const json& obj, const char* section,
                         std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool known = false;
    for (const char* a : allowed)
      if (key == a) known = true;
    if (!known)
      throw std::invalid_argument(std::string("config: unknown key '") + key + "' in " + section);
  }
}

template <typename T>
void read_into(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw std::invalid_argument("config: top level must be an object");
  reject_unknown_keys(root, "top level",
                      {"seed", "out_dir", "policy", "env", "mirror", "penalty", "rollout",
                       "buffer_capacity", "selection", "curation", "long2short",
                       "record_wall_time"});

  RunConfig cfg;
  read_into(root, "seed", cfg.seed);
  read_into(root, "out_dir", cfg.out_dir);
  read_into(root, "buffer_capacity", cfg.buffer_capacity);
  read_into(root, "record_wall_time", cfg.record_wall_time);

  if (root.contains("policy")) {
    const auto& p = root.at("policy");
    reject_unknown_keys(p, "policy",
                        {"vocab_size", "context_width", "answer_marker", "stop_token",
                         "sampling_temperature", "stop_bias"});
    read_into(p, "vocab_size", cfg.spec.vocab_size);
    read_into(p, "context_width", cfg.spec.context_width);
    read_into(p, "answer_marker", cfg.spec.answer_marker);
    read_into(p, "stop_token", cfg.spec.stop_token);
    read_into(p, "sampling_temperature", cfg.spec.sampling_temperature);
    read_into(p, "stop_bias", cfg.spec.stop_bias);
  }

  if (root.contains("env")) {
    const auto& e = root.at("env");
    reject_unknown_keys(e, "env", {"modulus", "difficulty_mix", "op_set", "seed"});
    read_into(e, "modulus", cfg.env.modulus);
    read_into(e, "seed", cfg.env.seed);
    if (e.contains("difficulty_mix")) {
      cfg.env.difficulty_mix.clear();
      for (const auto& [key, value] : e.at("difficulty_mix").items())
        cfg.env.difficulty_mix[std::stoi(key)] = value.get<int>();
    }
    if (e.contains("op_set")) {
      cfg.env.op_set.clear();
      for (const auto& op : e.at("op_set")) {
        reject_unknown_keys(op, "env.op_set entry", {"kind", "operand"});
        envs::ChainOp chain_op;
        const auto kind = op.at("kind").get<std::string>();
        if (kind == "add")
          chain_op.kind = envs::OpKind::add;
        else if (kind == "mul")
          chain_op.kind = envs::OpKind::mul;
        else
          throw std::invalid_argument("config: env.op_set kind must be add or mul");
        chain_op.operand = op.at("operand").get<int>();
        cfg.env.op_set.push_back(chain_op);
      }
    }
  }

  if (root.contains("mirror")) {
    const auto& m = root.at("mirror");
    reject_unknown_keys(m, "mirror",
                        {"tau", "k", "learning_rate", "baseline", "inner_steps", "iterations",
                         "momentum"});
    read_into(m, "tau", cfg.mirror.tau);
    read_into(m, "k", cfg.mirror.k);
    read_into(m, "learning_rate", cfg.mirror.learning_rate);
    read_into(m, "inner_steps", cfg.mirror.inner_steps);
    read_into(m, "iterations", cfg.mirror.iterations);
    read_into(m, "momentum", cfg.mirror.momentum);
    if (m.contains("baseline")) {
      const auto b = m.at("baseline").get<std::string>();
      if (b == "mean_reward")
        cfg.mirror.baseline_mode = mirror::BaselineMode::mean_reward;
      else if (b == "log_mean_exp")
        cfg.mirror.baseline_mode = mirror::BaselineMode::log_mean_exp;
      else
        throw std::invalid_argument("config: mirror.baseline must be mean_reward or log_mean_exp");
    }
  }

  if (root.contains("penalty")) {
    const auto& p = root.at("penalty");
    reject_unknown_keys(p, "penalty", {"weight", "warmup_iterations", "repeat_penalty"});
    read_into(p, "weight", cfg.penalty.weight);
    read_into(p, "warmup_iterations", cfg.penalty.warmup_iterations);
    read_into(p, "repeat_penalty", cfg.penalty.repeat_penalty);
  }

  if (root.contains("rollout")) {
    const auto& r = root.at("rollout");
    reject_unknown_keys(r, "rollout",
                        {"budget", "max_total_len", "min_pattern_len", "min_repeats"});
    read_into(r, "budget", cfg.rollout.budget);
    read_into(r, "max_total_len", cfg.rollout.max_total_len);
    read_into(r, "min_pattern_len", cfg.rollout.repeat.min_pattern_len);
    read_into(r, "min_repeats", cfg.rollout.repeat.min_repeats);
  }

  if (root.contains("selection")) {
    const auto& s = root.at("selection");
    reject_unknown_keys(s, "selection",
                        {"mode", "problems_per_iteration", "curriculum_warmup", "hard_threshold",
                         "tracker_prior"});
    if (s.contains("mode")) cfg.selection.mode = sampling_mode_from(s.at("mode").get<std::string>());
    read_into(s, "problems_per_iteration", cfg.selection.problems_per_iteration);
    read_into(s, "curriculum_warmup", cfg.selection.schedule.warmup_iterations);
    read_into(s, "hard_threshold", cfg.selection.schedule.hard_threshold);
    read_into(s, "tracker_prior", cfg.selection.tracker_prior);
  }

  if (root.contains("curation")) {
    const auto& c = root.at("curation");
    reject_unknown_keys(c, "curation",
                        {"enabled", "guess_attempts", "pass_rate_attempts", "bucket_lower",
                         "bucket_upper", "case_agree_threshold", "suite_accept_threshold",
                         "cases_per_problem", "submissions_sampled", "guess_temperature"});
    read_into(c, "enabled", cfg.curation_enabled);
    read_into(c, "guess_attempts", cfg.curation.guess_attempts);
    read_into(c, "pass_rate_attempts", cfg.curation.pass_rate_attempts);
    read_into(c, "bucket_lower", cfg.curation.bucket_lower);
    read_into(c, "bucket_upper", cfg.curation.bucket_upper);
    read_into(c, "case_agree_threshold", cfg.curation.case_agree_threshold);
    read_into(c, "suite_accept_threshold", cfg.curation.suite_accept_threshold);
    read_into(c, "cases_per_problem", cfg.curation.cases_per_problem);
    read_into(c, "submissions_sampled", cfg.curation.submissions_sampled);
    read_into(c, "guess_temperature", cfg.curation.guess_temperature);
  }

  if (root.contains("long2short")) {
    const auto& l = root.at("long2short");
    reject_unknown_keys(l, "long2short",
                        {"srs_samples", "dpo_length_ratio", "dpo_beta", "short_budget",
                         "merge_weight", "source_lambda"});
    read_into(l, "srs_samples", cfg.long2short.srs_samples);
    read_into(l, "dpo_length_ratio", cfg.long2short.dpo_length_ratio);
    read_into(l, "dpo_beta", cfg.long2short.dpo_beta);
    read_into(l, "short_budget", cfg.long2short.short_budget);
    read_into(l, "merge_weight", cfg.long2short.merge_weight);
    read_into(l, "source_lambda", cfg.long2short.source_lambda);
  }

  // k is single-sourced from the mirror config.
  cfg.rollout.k = cfg.mirror.k;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

std::string config_to_json(const RunConfig& config) {
  json root;
  root["seed"] = config.seed;
  root["out_dir"] = config.out_dir;
  root["record_wall_time"] = config.record_wall_time;
  root["buffer_capacity"] = config.buffer_capacity;
  root["policy"] = {{"vocab_size", config.spec.vocab_size},
                    {"context_width", config.spec.context_width},
                    {"answer_marker", config.spec.answer_marker},
                    {"stop_token", config.spec.stop_token},
                    {"sampling_temperature", config.spec.sampling_temperature},
                    {"stop_bias", config.spec.stop_bias}};
  json mix;
  for (const auto& [difficulty, count] : config.env.difficulty_mix)
    mix[std::to_string(difficulty)] = count;
  json ops = json::array();
  for (const auto& op : config.env.op_set)
    ops.push_back({{"kind", op.kind == envs::OpKind::add ? "add" : "mul"},
                   {"operand", op.operand}});
  root["env"] = {{"modulus", config.env.modulus},
                 {"difficulty_mix", mix},
                 {"op_set", ops},
                 {"seed", config.env.seed}};
  root["mirror"] = {
      {"tau", config.mirror.tau},
      {"k", config.mirror.k},
      {"learning_rate", config.mirror.learning_rate},
      {"baseline", config.mirror.baseline_mode == mirror::BaselineMode::mean_reward
                       ? "mean_reward"
                       : "log_mean_exp"},
      {"inner_steps", config.mirror.inner_steps},
      {"iterations", config.mirror.iterations},
      {"momentum", config.mirror.momentum}};
  root["penalty"] = {{"weight", config.penalty.weight},
                     {"warmup_iterations", config.penalty.warmup_iterations},
                     {"repeat_penalty", config.penalty.repeat_penalty}};
  root["rollout"] = {{"budget", config.rollout.budget},
                     {"max_total_len", config.rollout.max_total_len},
                     {"min_pattern_len", config.rollout.repeat.min_pattern_len},
                     {"min_repeats", config.rollout.repeat.min_repeats}};
  root["selection"] = {{"mode", sampling_mode_name(config.selection.mode)},
                       {"problems_per_iteration", config.selection.problems_per_iteration},
                       {"curriculum_warmup", config.selection.schedule.warmup_iterations},
                       {"hard_threshold", config.selection.schedule.hard_threshold},
                       {"tracker_prior", config.selection.tracker_prior}};
  root["curation"] = {{"enabled", config.curation_enabled},
                      {"guess_attempts", config.curation.guess_attempts},
                      {"pass_rate_attempts", config.curation.pass_rate_attempts},
                      {"bucket_lower", config.curation.bucket_lower},
                      {"bucket_upper", config.curation.bucket_upper},
                      {"case_agree_threshold", config.curation.case_agree_threshold},
                      {"suite_accept_threshold", config.curation.suite_accept_threshold},
                      {"cases_per_problem", config.curation.cases_per_problem},
                      {"submissions_sampled", config.curation.submissions_sampled},
                      {"guess_temperature", config.curation.guess_temperature}};
  root["long2short"] = {{"srs_samples", config.long2short.srs_samples},
                        {"dpo_length_ratio", config.long2short.dpo_length_ratio},
                        {"dpo_beta", config.long2short.dpo_beta},
                        {"short_budget", config.long2short.short_budget},
                        {"merge_weight", config.long2short.merge_weight},
                        {"source_lambda", config.long2short.source_lambda}};
  return root.dump();
}

IterationReport report_from(const mirror::TrainOutcome& outcome, int iteration, double wall_ms) {
  IterationReport report;
  report.iteration = iteration;
  report.mean_reward = outcome.mean_reward;
  report.mean_len = outcome.mean_len;
  report.p95_len = outcome.p95_len;
  report.buffer_depth = outcome.buffer_depth;
  report.wall_ms = wall_ms;
  if (!outcome.outcomes.empty()) {
    std::map<std::int64_t, bool> solved;
    std::size_t correct = 0;
    for (const auto& so : outcome.outcomes) {
      solved[so.problem_id] = solved[so.problem_id] || so.correct;
      correct += so.correct ? 1 : 0;
    }
    std::size_t solved_count = 0;
    for (const auto& [id, ok] : solved) solved_count += ok ? 1 : 0;
    report.accuracy = static_cast<double>(solved_count) / static_cast<double>(solved.size());
    report.pass1 = static_cast<double>(correct) / static_cast<double>(outcome.outcomes.size());
  }
  return report;
}

void save_metrics_csv(const std::vector<IterationReport>& reports, const RunConfig& config,
                      const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("save_metrics_csv: cannot open " + path);
  std::fprintf(f, "# %s\n", config_to_json(config).c_str());
  std::fprintf(f, "iteration,mean_reward,accuracy,mean_len,p95_len,buffer_depth,wall_ms,pass1\n");
  for (const auto& r : reports)
    std::fprintf(f, "%d,%.6f,%.6f,%.6f,%.6f,%zu,%.3f,%.6f\n", r.iteration, r.mean_reward,
                 r.accuracy, r.mean_len, r.p95_len, r.buffer_depth, r.wall_ms, r.pass1);
  std::fclose(f);
}

std::vector<IterationReport> load_metrics_csv(const std::string& path, std::string* config_json) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("load_metrics_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.size() < 2 || line[0] != '#')
    throw std::runtime_error("load_metrics_csv: missing config line in " + path);
  if (config_json != nullptr) *config_json = line.substr(2);
  if (!std::getline(in, line) ||
      line != "iteration,mean_reward,accuracy,mean_len,p95_len,buffer_depth,wall_ms,pass1")
    throw std::runtime_error("load_metrics_csv: unexpected header in " + path);
  std::vector<IterationReport> reports;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    IterationReport r;
    unsigned long long depth = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%llu,%lf,%lf", &r.iteration,
                    &r.mean_reward, &r.accuracy, &r.mean_len, &r.p95_len, &depth, &r.wall_ms,
                    &r.pass1) != 8)
      throw std::runtime_error("load_metrics_csv: malformed row: " + line);
    r.buffer_depth = static_cast<std::size_t>(depth);
    reports.push_back(r);
  }
  return reports;
}

namespace {

struct LoopOptions {
  SamplingMode mode = SamplingMode::uniform;
  int iterations = 0;
  rollout::RolloutConfig rollout;
  bool use_rest = false;
  double rest_learning_rate = 1.0;
  bool record_wall_time = false;
  int checkpoint_stride = 0;  // 0 = keep no intermediate checkpoints
};

std::vector<const envs::Problem*> select_problems(const std::vector<envs::Problem>& problems,
                                                  const sampling::DifficultyTracker& tracker,
                                                  const SelectionConfig& selection,
                                                  SamplingMode mode, int iteration,
                                                  std::uint64_t run_seed) {
  auto rng = rng::stream(run_seed, {rng::PROBLEM_DRAW, static_cast<std::uint64_t>(iteration)});

  std::vector<std::size_t> eligible;
  if (mode == SamplingMode::curriculum || mode == SamplingMode::curriculum_prioritized) {
    eligible = sampling::curriculum_filter(problems, iteration, selection.schedule);
  } else {
    eligible.resize(problems.size());
    std::iota(eligible.begin(), eligible.end(), 0);
  }

  std::vector<const envs::Problem*> drawn;
  drawn.reserve(selection.problems_per_iteration);
  if (mode == SamplingMode::prioritized || mode == SamplingMode::curriculum_prioritized) {
    std::vector<std::int64_t> ids;
    ids.reserve(eligible.size());
    for (const auto idx : eligible) ids.push_back(problems[idx].id);
    const auto weights = sampling::prioritized_weights(tracker, ids);
    double total = 0.0;
    for (double w : weights) total += w;
    for (int n = 0; n < selection.problems_per_iteration; ++n) {
      double u = rng.real() * total;
      std::size_t pick = eligible.size() - 1;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        u -= weights[i];
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
      drawn.push_back(&problems[eligible[pick]]);
    }
  } else {
    for (int n = 0; n < selection.problems_per_iteration; ++n)
      drawn.push_back(&problems[eligible[rng.uniform(eligible.size())]]);
  }
  return drawn;
}

/// The shared training loop. Appends into `reports` as it goes so a
/// mid-run failure still leaves a usable partial record with the caller.
void train_loop(policy::ParamVector& params, const RunConfig& config,
                const std::vector<envs::Problem>& problems, const LoopOptions& options,
                std::uint64_t run_seed, std::vector<IterationReport>& reports,
                std::vector<std::uint64_t>& fresh_per_iteration,
                std::vector<std::pair<int, policy::ParamVector>>* checkpoints = nullptr) {
  if (problems.empty()) throw std::runtime_error("train_loop: empty problem set");
  std::map<std::int64_t, const envs::Problem*> by_id;
  for (const auto& p : problems) by_id[p.id] = &p;
  const auto find = [&by_id](std::int64_t id) -> const envs::Problem* {
    const auto it = by_id.find(id);
    return it == by_id.end() ? nullptr : it->second;
  };

  sampling::DifficultyTracker tracker(config.selection.tracker_prior);
  rollout::ReplayBuffer buffer(config.buffer_capacity);
  mirror::Optimizer optimizer;
  optimizer.momentum = config.mirror.momentum;

  for (int iteration = 0; iteration < options.iterations; ++iteration) {
    const auto drawn =
        select_problems(problems, tracker, config.selection, options.mode, iteration, run_seed);

    const auto t0 = std::chrono::steady_clock::now();
    mirror::TrainOutcome outcome;
    if (options.use_rest) {
      outcome = mirror::rest_iteration(params, config.spec, drawn, find, buffer,
                                       options.rest_learning_rate, config.mirror,
                                       options.rollout, config.penalty, iteration, run_seed);
    } else {
      outcome = mirror::train_iteration(params, config.spec, drawn, find, buffer, config.mirror,
                                        options.rollout, config.penalty, iteration, run_seed,
                                        optimizer);
    }
    double wall_ms = 0.0;
    if (options.record_wall_time) {
      const auto t1 = std::chrono::steady_clock::now();
      wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }

    for (const auto& so : outcome.outcomes) tracker.update(so.problem_id, so.correct);
    fresh_per_iteration.push_back(static_cast<std::uint64_t>(outcome.fresh));
    reports.push_back(report_from(outcome, iteration, wall_ms));

    if (checkpoints != nullptr && options.checkpoint_stride > 0 &&
        ((iteration + 1) % options.checkpoint_stride == 0 || iteration + 1 == options.iterations))
      checkpoints->emplace_back(iteration, params);
  }
}

std::vector<envs::Problem> curated_problems(const RunConfig& config,
                                            const std::string& report_path) {
  RunConfig resolved = config;
  if (resolved.env.seed == 0) resolved.env.seed = rng::derive(config.seed, {rng::ENV_GEN});
  auto problems = envs::generate_problem_set(resolved.env, config.spec);
  if (!config.curation_enabled) return problems;

  const policy::ParamVector fresh_params(config.spec.vocab_size);
  const auto report = curation::curate_problem_set(problems, fresh_params, config.spec,
                                                   config.curation, config.seed);
  if (!report_path.empty()) curation::save_report(report, report_path);
  std::set<std::int64_t> kept(report.kept_ids.begin(), report.kept_ids.end());
  std::vector<envs::Problem> survivors;
  for (auto& p : problems)
    if (kept.count(p.id)) survivors.push_back(std::move(p));
  if (survivors.empty())
    throw std::runtime_error("curation removed every problem; relax guess_attempts or modulus");
  return survivors;
}

std::int64_t samples_to_threshold(const std::vector<IterationReport>& reports,
                                  const std::vector<std::uint64_t>& fresh, double threshold) {
  std::uint64_t cumulative = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    cumulative += fresh[i];
    if (reports[i].accuracy >= threshold) return static_cast<std::int64_t>(cumulative);
  }
  return -1;
}

}  // namespace

TrainResult run_train(const RunConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);

  TrainResult result;
  result.problems = curated_problems(config, config.out_dir + "/curation.txt");
  result.params = policy::ParamVector(config.spec.vocab_size);

  LoopOptions options;
  options.mode = config.selection.mode;
  options.iterations = config.mirror.iterations;
  options.rollout = config.rollout;
  options.rollout.k = config.mirror.k;
  options.record_wall_time = config.record_wall_time;

  std::vector<std::uint64_t> fresh;
  const std::string csv_path = config.out_dir + "/metrics.csv";
  try {
    train_loop(result.params, config, result.problems, options, config.seed, result.reports,
               fresh);
  } catch (...) {
    // Keep the partial record: the CSV is the run's black box.
    save_metrics_csv(result.reports, config, csv_path);
    throw;
  }
  for (const auto f : fresh) result.samples_started += f;

  save_metrics_csv(result.reports, config, csv_path);
  policy::save_snapshot(result.params, config.out_dir + "/policy.snapshot");
  std::ofstream cfg_out(config.out_dir + "/config.json");
  cfg_out << config_to_json(config) << "\n";
  return result;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("spearman: need at least 2 points");
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&v](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= ra.size();
  mb /= rb.size();
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;  // a constant series carries no ordering signal
  return cov / std::sqrt(va * vb);
}

EvalResult evaluate(const policy::ParamVector& params, const policy::PolicySpec& spec,
                    const std::vector<envs::Problem>& problems, int k, int budget,
                    std::uint64_t seed) {
  if (problems.empty()) throw std::invalid_argument("evaluate: empty problem set");
  if (k < 1) throw std::invalid_argument("evaluate: k must be >= 1");
  EvalResult result;
  std::size_t correct = 0, total = 0, solved = 0;
  double len_sum = 0.0;
  for (const auto& problem : problems) {
    const auto ctx = problem.context();
    bool any = false;
    for (int j = 0; j < k; ++j) {
      auto rng = rng::stream(seed, {rng::EVAL, static_cast<std::uint64_t>(problem.id),
                                    static_cast<std::uint64_t>(j)});
      const auto traj = policy::sample_sequence(params, spec, ctx, budget, rng);
      const bool ok = envs::verify(problem, traj) == 1;
      any = any || ok;
      correct += ok ? 1 : 0;
      len_sum += traj.length();
      ++total;
    }
    solved += any ? 1 : 0;
  }
  result.pass1 = static_cast<double>(correct) / static_cast<double>(total);
  result.best_of_k = static_cast<double>(solved) / static_cast<double>(problems.size());
  result.mean_len = len_sum / static_cast<double>(total);
  return result;
}

RestAblationResult run_ablation_rest(const RunConfig& config, double threshold) {
  config.validate();
  const std::string dir = config.out_dir + "/rest_ablation";
  std::filesystem::create_directories(dir);
  const auto problems = curated_problems(config, dir + "/curation.txt");

  LoopOptions options;
  options.mode = config.selection.mode;
  options.iterations = config.mirror.iterations;
  options.rollout = config.rollout;
  options.rollout.k = config.mirror.k;
  options.record_wall_time = config.record_wall_time;

  RestAblationResult result;
  result.threshold = threshold;

  policy::ParamVector mirror_params(config.spec.vocab_size);
  std::vector<std::uint64_t> mirror_fresh;
  train_loop(mirror_params, config, problems, options, config.seed, result.mirror_reports,
             mirror_fresh);

  options.use_rest = true;
  options.rest_learning_rate = config.mirror.learning_rate;
  policy::ParamVector rest_params(config.spec.vocab_size);
  std::vector<std::uint64_t> rest_fresh;
  train_loop(rest_params, config, problems, options, config.seed, result.rest_reports,
             rest_fresh);

  result.mirror_samples_to_threshold =
      samples_to_threshold(result.mirror_reports, mirror_fresh, threshold);
  result.rest_samples_to_threshold =
      samples_to_threshold(result.rest_reports, rest_fresh, threshold);

  const auto ms = result.mirror_samples_to_threshold;
  const auto rs = result.rest_samples_to_threshold;
  if (ms >= 0 && (rs < 0 || ms < rs))
    result.winner = "mirror";
  else if (rs >= 0 && (ms < 0 || rs < ms))
    result.winner = "rest";
  else
    result.winner = "none";

  save_metrics_csv(result.mirror_reports, config, dir + "/mirror.csv");
  save_metrics_csv(result.rest_reports, config, dir + "/rest.csv");
  std::ofstream summary(dir + "/summary.txt");
  summary << "threshold " << threshold << "\n"
          << "mirror_samples " << ms << "\n"
          << "rest_samples " << rs << "\n"
          << "winner " << result.winner << "\n";
  return result;
}

CurriculumAblationResult run_ablation_curriculum(const RunConfig& config) {
  config.validate();
  const std::string dir = config.out_dir + "/curriculum_ablation";
  std::filesystem::create_directories(dir);
  const auto problems = curated_problems(config, dir + "/curation.txt");

  LoopOptions options;
  options.iterations = config.mirror.iterations;
  options.rollout = config.rollout;
  options.rollout.k = config.mirror.k;
  options.record_wall_time = config.record_wall_time;

  CurriculumAblationResult result;
  std::vector<std::uint64_t> fresh;

  options.mode = SamplingMode::curriculum;
  policy::ParamVector curriculum_params(config.spec.vocab_size);
  train_loop(curriculum_params, config, problems, options, config.seed,
             result.curriculum_reports, fresh);

  options.mode = SamplingMode::uniform;
  policy::ParamVector uniform_params(config.spec.vocab_size);
  fresh.clear();
  train_loop(uniform_params, config, problems, options, config.seed, result.uniform_reports,
             fresh);

  // Hard stratum: everything at or above the curriculum threshold, or the
  // hardest stratum present when the threshold overshoots the mix.
  std::vector<envs::Problem> hard;
  int max_difficulty = 0;
  for (const auto& p : problems) max_difficulty = std::max(max_difficulty, p.difficulty);
  const int cutoff = std::min(config.selection.schedule.hard_threshold, max_difficulty);
  for (const auto& p : problems)
    if (p.difficulty >= cutoff) hard.push_back(p);

  const auto curriculum_eval = evaluate(curriculum_params, config.spec, hard, config.mirror.k,
                                        config.rollout.budget, config.seed);
  const auto uniform_eval = evaluate(uniform_params, config.spec, hard, config.mirror.k,
                                     config.rollout.budget, config.seed);
  result.curriculum_hard_accuracy = curriculum_eval.pass1;
  result.uniform_hard_accuracy = uniform_eval.pass1;

  save_metrics_csv(result.curriculum_reports, config, dir + "/curriculum.csv");
  save_metrics_csv(result.uniform_reports, config, dir + "/uniform.csv");
  std::ofstream summary(dir + "/summary.txt");
  summary << "hard_cutoff " << cutoff << "\n"
          << "curriculum_hard_accuracy " << result.curriculum_hard_accuracy << "\n"
          << "uniform_hard_accuracy " << result.uniform_hard_accuracy << "\n";
  return result;
}

Long2ShortSuiteResult run_long2short_suite(const policy::ParamVector& long_policy,
                                           const RunConfig& config) {
  config.validate();
  const std::string dir = config.out_dir + "/l2s_suite";
  std::filesystem::create_directories(dir);
  const auto problems = curated_problems(config, dir + "/curation.txt");

  // Held-out split by id so the cut is stable under curation.
  std::vector<envs::Problem> train, held_out;
  for (const auto& p : problems)
    (p.id % 10 >= 7 ? held_out : train).push_back(p);
  if (train.empty() || held_out.empty())
    throw std::runtime_error("run_long2short_suite: split left an empty side");

  const auto& l2s = config.long2short;
  const int eval_k = config.mirror.k;
  const int eval_budget = config.rollout.budget;

  // Internal short-chain baseline for merging: a fresh policy trained
  // from scratch under the short budget.
  LoopOptions short_options;
  short_options.mode = SamplingMode::uniform;
  short_options.iterations = config.mirror.iterations;
  short_options.rollout = config.rollout;
  short_options.rollout.k = config.mirror.k;
  short_options.rollout.budget = l2s.short_budget;
  short_options.rollout.max_total_len = l2s.short_budget;
  policy::ParamVector short_params(config.spec.vocab_size);
  {
    std::vector<IterationReport> reports;
    std::vector<std::uint64_t> fresh;
    train_loop(short_params, config, train, short_options,
               rng::derive(config.seed, {rng::ABLATION, 0}), reports, fresh);
  }

  const auto merged = long2short::merge_policies(long_policy, short_params, l2s);

  // merge + shortest rejection sampling -> supervised fitting.
  std::vector<long2short::SftExample> srs_examples;
  for (const auto& p : train) {
    const auto best = long2short::shortest_rejection_sample(merged, config.spec, p,
                                                            l2s.srs_samples, eval_budget,
                                                            config.seed);
    if (best) srs_examples.push_back({p.context(), *best});
  }
  policy::ParamVector merge_srs = merged;
  if (!srs_examples.empty())
    merge_srs = long2short::sft_on_samples(merged, config.spec, srs_examples, 0.5, 50);

  // DPO on the long policy's own samples.
  std::vector<long2short::DpoPair> pairs;
  for (const auto& p : train) {
    const auto ctx = p.context();
    std::vector<std::pair<policy::Trajectory, bool>> samples;
    for (int j = 0; j < l2s.srs_samples; ++j) {
      auto rng = rng::stream(config.seed, {rng::L2S, static_cast<std::uint64_t>(p.id),
                                           static_cast<std::uint64_t>(j)});
      auto traj = policy::sample_sequence(long_policy, config.spec, ctx, eval_budget, rng);
      const bool ok = envs::verify(p, traj) == 1;
      samples.emplace_back(std::move(traj), ok);
    }
    for (auto& pair : long2short::build_dpo_pairs(ctx, samples, l2s)) pairs.push_back(pair);
  }
  policy::ParamVector dpo_params = long_policy;
  if (!pairs.empty())
    for (int step = 0; step < 30; ++step)
      dpo_params = long2short::dpo_update(dpo_params, long_policy, config.spec, pairs,
                                          l2s.dpo_beta, 0.5);

  // The second RL phase.
  mirror::MirrorConfig l2s_mirror = config.mirror;
  const auto rl = long2short::long2short_rl(long_policy, config.spec, train, l2s, l2s_mirror,
                                            config.penalty, config.seed);

  Long2ShortSuiteResult result;
  const auto score = [&](const std::string& name, const policy::ParamVector& params) {
    const auto eval = evaluate(params, config.spec, held_out, eval_k, eval_budget, config.seed);
    result.rows.push_back({name, eval.pass1, eval.mean_len});
  };
  score("long", long_policy);
  score("merge", merged);
  score("merge+srs", merge_srs);
  score("dpo", dpo_params);
  score("l2s_rl", rl.params);

  std::FILE* f = std::fopen((dir + "/l2s_table.csv").c_str(), "w");
  if (f == nullptr) throw std::runtime_error("run_long2short_suite: cannot open table");
  std::fprintf(f, "# %s\n", config_to_json(config).c_str());
  std::fprintf(f, "method,accuracy,mean_tokens\n");
  for (const auto& row : result.rows)
    std::fprintf(f, "%s,%.6f,%.6f\n", row.method.c_str(), row.accuracy, row.mean_tokens);
  std::fclose(f);
  return result;
}

L2sAblationResult run_ablation_l2s(const RunConfig& config) {
  config.validate();
  const auto problems = curated_problems(config, "");

  // Train the long policy exactly as `train` would, but keep periodic
  // checkpoints so the compression source can be picked by quality rather
  // than recency.
  LoopOptions options;
  options.mode = config.selection.mode;
  options.iterations = config.mirror.iterations;
  options.rollout = config.rollout;
  options.rollout.k = config.mirror.k;
  options.checkpoint_stride = std::max(1, config.mirror.iterations / 12);

  L2sAblationResult result;
  policy::ParamVector long_params(config.spec.vocab_size);
  std::vector<std::uint64_t> fresh;
  std::vector<std::pair<int, policy::ParamVector>> checkpoints;
  train_loop(long_params, config, problems, options, config.seed, result.train_reports, fresh,
             &checkpoints);

  // Source selection: the checkpoint maximizing accuracy - lambda * length
  // on a validation slice disjoint from the suite's held-out ids.
  std::vector<envs::Problem> validation;
  for (const auto& p : problems)
    if (p.id % 10 == 5 || p.id % 10 == 6) validation.push_back(p);
  if (validation.empty()) validation = problems;

  const std::uint64_t eval_seed = rng::derive(config.seed, {rng::ABLATION, 1});
  struct Scored {
    int iteration;
    double pass1, mean_len, score;
  };
  std::vector<Scored> scored;
  const policy::ParamVector* best = nullptr;
  for (const auto& [iteration, params] : checkpoints) {
    const auto eval = evaluate(params, config.spec, validation, config.mirror.k,
                               config.rollout.budget, eval_seed);
    const double score = eval.pass1 - config.long2short.source_lambda * eval.mean_len;
    scored.push_back({iteration, eval.pass1, eval.mean_len, score});
    if (best == nullptr || score > result.source_score) {
      best = &params;
      result.source_iteration = iteration;
      result.source_score = score;
    }
  }

  const policy::ParamVector fallback(config.spec.vocab_size);
  result.suite = run_long2short_suite(best != nullptr ? *best : fallback, config);

  std::ofstream src(config.out_dir + "/l2s_suite/source.txt");
  src << "lambda " << config.long2short.source_lambda << "\n"
      << "source_iteration " << result.source_iteration << "\n"
      << "source_score " << result.source_score << "\n";
  for (const auto& s : scored)
    src << "checkpoint " << s.iteration << " pass1 " << s.pass1 << " mean_len " << s.mean_len
        << " score " << s.score << "\n";
  return result;
}

}  // namespace minicot::harness
