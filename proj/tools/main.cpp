// minicot command line: train a policy, curate a problem set, run the
// ablation suites, or replay a metrics CSV to verify reproducibility.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "minicot/harness.hpp"

namespace {

namespace harness = minicot::harness;
using harness::RunConfig;

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int iterations = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "JSON run configuration file");
  cmd->add_option("-s,--seed", args.seed, "Override the run seed");
  cmd->add_option("-o,--out", args.out_dir, "Override the output directory");
  cmd->add_option("-n,--iterations", args.iterations, "Override the iteration count");
}

RunConfig resolve(const CLI::App* cmd, const CommonArgs& args) {
  RunConfig config =
      args.config_path.empty() ? RunConfig{} : harness::load_config(args.config_path);
  if (cmd->count("--seed") > 0) config.seed = args.seed;
  if (cmd->count("--out") > 0) config.out_dir = args.out_dir;
  if (cmd->count("--iterations") > 0) config.mirror.iterations = args.iterations;
  config.rollout.k = config.mirror.k;
  config.validate();
  return config;
}

void print_reports_tail(const std::vector<harness::IterationReport>& reports) {
  if (reports.empty()) {
    std::printf("no iterations ran\n");
    return;
  }
  const auto& last = reports.back();
  std::printf("final iteration %d: accuracy %.4f  pass@1 %.4f  mean_reward %.4f  "
              "mean_len %.2f  p95_len %.2f\n",
              last.iteration, last.accuracy, last.pass1, last.mean_reward, last.mean_len,
              last.p95_len);
}

int cmd_train(const CLI::App* cmd, const CommonArgs& args) {
  const RunConfig config = resolve(cmd, args);
  const auto result = harness::run_train(config);
  std::printf("trained on %zu problems, %llu fresh rollouts\n", result.problems.size(),
              static_cast<unsigned long long>(result.samples_started));
  print_reports_tail(result.reports);
  std::printf("artifacts in %s\n", config.out_dir.c_str());
  return 0;
}

int cmd_curate(const CLI::App* cmd, const CommonArgs& args) {
  RunConfig config = resolve(cmd, args);
  if (config.env.seed == 0)
    config.env.seed = minicot::rng::derive(config.seed, {minicot::rng::ENV_GEN});
  const auto problems = minicot::envs::generate_problem_set(config.env, config.spec);
  const minicot::policy::ParamVector fresh(config.spec.vocab_size);
  const auto report = minicot::curation::curate_problem_set(problems, fresh, config.spec,
                                                            config.curation, config.seed);
  std::filesystem::create_directories(config.out_dir);
  const std::string path = config.out_dir + "/curation.txt";
  minicot::curation::save_report(report, path);
  std::size_t removed = 0;
  for (const auto& entry : report.entries) removed += entry.removed_as_hackable ? 1 : 0;
  std::printf("curated %zu problems: kept %zu, removed %zu as guessable\n",
              report.entries.size(), report.kept_ids.size(), removed);
  std::printf("report written to %s\n", path.c_str());
  return 0;
}

int cmd_ablate(const CLI::App* cmd, const CommonArgs& args, const std::string& which,
               double threshold) {
  const RunConfig config = resolve(cmd, args);
  if (which == "rest") {
    const auto result = harness::run_ablation_rest(config, threshold);
    std::printf("samples to %.0f%% accuracy: mirror %lld, rest %lld (-1 = never)\n",
                100.0 * result.threshold,
                static_cast<long long>(result.mirror_samples_to_threshold),
                static_cast<long long>(result.rest_samples_to_threshold));
    std::printf("winner: %s\n", result.winner.c_str());
  } else if (which == "curriculum") {
    const auto result = harness::run_ablation_curriculum(config);
    std::printf("hard-stratum accuracy: curriculum %.4f, uniform %.4f\n",
                result.curriculum_hard_accuracy, result.uniform_hard_accuracy);
  } else if (which == "l2s") {
    const auto result = harness::run_ablation_l2s(config);
    std::printf("compression source: checkpoint at iteration %d (score %.4f)\n",
                result.source_iteration, result.source_score);
    std::printf("%-10s %9s %12s\n", "method", "accuracy", "mean_tokens");
    for (const auto& row : result.suite.rows)
      std::printf("%-10s %9.4f %12.2f\n", row.method.c_str(), row.accuracy, row.mean_tokens);
  } else {
    throw std::invalid_argument("ablate: unknown suite '" + which + "'");
  }
  std::printf("artifacts in %s\n", config.out_dir.c_str());
  return 0;
}

int cmd_long2short(const CLI::App* cmd, const CommonArgs& args, const std::string& snapshot) {
  const RunConfig config = resolve(cmd, args);
  const auto long_policy = minicot::policy::load_snapshot(snapshot);
  const auto result = harness::run_long2short_suite(long_policy, config);
  std::printf("%-10s %9s %12s\n", "method", "accuracy", "mean_tokens");
  for (const auto& row : result.rows)
    std::printf("%-10s %9.4f %12.2f\n", row.method.c_str(), row.accuracy, row.mean_tokens);
  std::printf("artifacts in %s/l2s_suite\n", config.out_dir.c_str());
  return 0;
}

int cmd_replay(const std::string& csv_path, const std::string& scratch) {
  std::string embedded;
  const auto original = harness::load_metrics_csv(csv_path, &embedded);
  RunConfig config = harness::config_from_json(embedded);
  config.out_dir = scratch.empty()
                       ? (std::filesystem::path(csv_path).parent_path() / "replay_check").string()
                       : scratch;
  harness::run_train(config);

  // Byte-compare everything below the config comment line: the replay runs
  // in its own directory, so only the embedded out_dir may differ.
  const auto body_after_header = [](const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw std::runtime_error("replay: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto cut = text.find('\n');
    return cut == std::string::npos ? std::string() : text.substr(cut + 1);
  };
  const std::string want = body_after_header(csv_path);
  const std::string got = body_after_header(config.out_dir + "/metrics.csv");
  if (want != got) {
    std::fprintf(stderr, "replay MISMATCH: %s does not reproduce (see %s/metrics.csv)\n",
                 csv_path.c_str(), config.out_dir.c_str());
    return 3;
  }
  std::printf("replay OK: %zu rows reproduced byte-for-byte\n", original.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minicot: a desk-scale long chain-of-thought RL trainer"};
  app.require_subcommand(1);

  CommonArgs train_args, curate_args, ablate_args, l2s_args;

  auto* train = app.add_subcommand("train", "Train a policy and write run artifacts");
  add_common(train, train_args);

  auto* curate = app.add_subcommand("curate", "Generate and curate a problem set only");
  add_common(curate, curate_args);

  auto* ablate = app.add_subcommand("ablate", "Run a paired-comparison suite");
  std::string suite;
  double threshold = 0.8;
  ablate->add_option("suite", suite, "Which suite: rest, curriculum or l2s")->required();
  ablate->add_option("--threshold", threshold, "Accuracy threshold for the rest suite");
  add_common(ablate, ablate_args);

  auto* l2s = app.add_subcommand("long2short", "Token-efficiency suite from a long policy");
  std::string snapshot;
  l2s->add_option("--snapshot", snapshot, "Trained long-policy snapshot")->required();
  add_common(l2s, l2s_args);

  auto* replay = app.add_subcommand("replay", "Re-run a metrics CSV from its embedded config");
  std::string csv_path, replay_out;
  replay->add_option("csv", csv_path, "metrics.csv produced by a previous run")->required();
  replay->add_option("-o,--out", replay_out, "Directory for the replay run");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train, train_args);
    if (curate->parsed()) return cmd_curate(curate, curate_args);
    if (ablate->parsed()) return cmd_ablate(ablate, ablate_args, suite, threshold);
    if (l2s->parsed()) return cmd_long2short(l2s, l2s_args, snapshot);
    if (replay->parsed()) return cmd_replay(csv_path, replay_out);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
