#pragma once
/**
 * Experiment orchestration: resolved run configuration (JSON file in,
 * artifacts out), the training loop with pluggable problem selection, CSV
 * metrics, and the three ablation suites. Every artifact embeds the
 * resolved config and seed, and every random draw descends from the run
 * seed through named sub-streams, so any output can be regenerated
 * byte-for-byte from its own header line.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "minicot/curation.hpp"
#include "minicot/envs.hpp"
#include "minicot/long2short.hpp"
#include "minicot/mirror.hpp"
#include "minicot/policy.hpp"
#include "minicot/rewards.hpp"
#include "minicot/rollout.hpp"
#include "minicot/sampling.hpp"

namespace minicot::harness {

enum class SamplingMode { uniform, curriculum, prioritized, curriculum_prioritized };

const char* sampling_mode_name(SamplingMode mode);
/// Throws std::invalid_argument on an unknown name.
SamplingMode sampling_mode_from(const std::string& name);

struct SelectionConfig {
  SamplingMode mode = SamplingMode::uniform;
  int problems_per_iteration = 64;
  sampling::CurriculumSchedule schedule{60, 4};
  double tracker_prior = 0.0;

  void validate() const;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "run_out";
  // The positive stop bias starts the policy in a short-answer regime, so
  // response length has to be grown by training rather than trimmed.
  policy::PolicySpec spec{.stop_bias = 2.5};
  // env.seed 0 means: derive from the run seed.
  envs::EnvConfig env{10, {{1, 20}, {2, 30}, {3, 50}, {4, 50}, {5, 50}}};
  mirror::MirrorConfig mirror{.tau = 0.25, .learning_rate = 0.15, .inner_steps = 20};
  // warmup == the standard 300-iteration horizon: the length penalty is a
  // refinement phase that engages only when a run is extended past it.
  rewards::LengthPenaltyConfig penalty{1.0, 300, -0.5};
  rollout::RolloutConfig rollout;
  std::size_t buffer_capacity = 4096;
  SelectionConfig selection;
  curation::CurationConfig curation;
  long2short::Long2ShortConfig long2short;
  bool curation_enabled = true;
  bool record_wall_time = false;  // keep false for byte-identical reruns

  /// Throws std::invalid_argument with a field diagnostic.
  void validate() const;
};

/// Parse a config from JSON text / a file. Unknown keys are rejected so
/// typos cannot silently fall back to defaults. Throws std::invalid_argument.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

/// The resolved config as single-line JSON (embedded in artifacts).
std::string config_to_json(const RunConfig& config);

struct IterationReport {
  int iteration = 0;
  double mean_reward = 0.0;
  double accuracy = 0.0;  // fraction of problems with >= 1 correct sample
  double mean_len = 0.0;
  double p95_len = 0.0;
  std::size_t buffer_depth = 0;
  double wall_ms = 0.0;
  double pass1 = 0.0;  // mean correctness over all samples
};

/// Derive a report row from a training outcome (accuracy and pass1 both).
IterationReport report_from(const mirror::TrainOutcome& outcome, int iteration, double wall_ms);

/// CSV layout: a `# <resolved config json>` comment line, the fixed header
/// iteration,mean_reward,accuracy,mean_len,p95_len,buffer_depth,wall_ms,pass1
/// and one row per iteration.
void save_metrics_csv(const std::vector<IterationReport>& reports, const RunConfig& config,
                      const std::string& path);

/// Reads back what save_metrics_csv wrote (config line returned via
/// `config_json` when non-null). Throws std::runtime_error on malformed input.
std::vector<IterationReport> load_metrics_csv(const std::string& path,
                                              std::string* config_json = nullptr);

struct TrainResult {
  policy::ParamVector params{0};
  std::vector<IterationReport> reports;
  std::vector<envs::Problem> problems;  // the post-curation training set
  std::uint64_t samples_started = 0;    // fresh rollouts drawn over the run
};

/**
 * The full loop: generate problems, curate (when enabled), then iterate
 * problem selection -> rollout -> reward shaping -> mirror-descent update.
 * Writes metrics.csv, policy.snapshot, config.json (and curation.txt) under
 * config.out_dir. Fully reproducible from (config, seed).
 */
TrainResult run_train(const RunConfig& config);

/// Spearman rank correlation with average ranks on ties. Throws
/// std::invalid_argument on length mismatch or fewer than 2 points.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct EvalResult {
  double pass1 = 0.0;
  double best_of_k = 0.0;
  double mean_len = 0.0;
};

/// k samples per problem at the policy spec's sampling temperature;
/// draws come from the EVAL sub-stream of `seed`.
EvalResult evaluate(const policy::ParamVector& params, const policy::PolicySpec& spec,
                    const std::vector<envs::Problem>& problems, int k, int budget,
                    std::uint64_t seed);

struct RestAblationResult {
  std::vector<IterationReport> mirror_reports;
  std::vector<IterationReport> rest_reports;
  std::int64_t mirror_samples_to_threshold = -1;  // -1 when never reached
  std::int64_t rest_samples_to_threshold = -1;
  double threshold = 0.8;
  std::string winner;  // "mirror", "rest", or "none"
};

/**
 * Mirror descent vs. best-response fitting under identical seeds, problem
 * draws, and budgets. Samples-to-threshold counts fresh rollouts until the
 * report accuracy first reaches `threshold`. Writes per-arm CSVs and a
 * summary under config.out_dir.
 */
RestAblationResult run_ablation_rest(const RunConfig& config, double threshold = 0.8);

struct CurriculumAblationResult {
  std::vector<IterationReport> curriculum_reports;
  std::vector<IterationReport> uniform_reports;
  double curriculum_hard_accuracy = 0.0;  // pass1 on the hard stratum
  double uniform_hard_accuracy = 0.0;
};

/// Curriculum vs. uniform selection under identical seeds; the final
/// policies are scored on the hard stratum (difficulty >= the schedule's
/// threshold) with a shared evaluation stream.
CurriculumAblationResult run_ablation_curriculum(const RunConfig& config);

struct MethodRow {
  std::string method;
  double accuracy = 0.0;     // pass1 on the held-out split
  double mean_tokens = 0.0;  // over all evaluation samples
};

struct Long2ShortSuiteResult {
  std::vector<MethodRow> rows;  // long, merge, merge+srs, dpo, l2s_rl
};

/**
 * Token-efficiency comparison. Problems split by id into train/held-out;
 * a short-budget baseline is trained internally for merging; every method
 * is scored on the held-out split with shared evaluation draws. Writes
 * l2s_table.csv under config.out_dir.
 */
Long2ShortSuiteResult run_long2short_suite(const policy::ParamVector& long_policy,
                                           const RunConfig& config);

struct L2sAblationResult {
  Long2ShortSuiteResult suite;
  int source_iteration = -1;  // checkpoint chosen as the compression source
  double source_score = 0.0;  // pass1 - source_lambda * mean_len on validation
  std::vector<IterationReport> train_reports;
};

/**
 * End-to-end long2short comparison: trains the long policy from scratch
 * (keeping periodic checkpoints), picks the source checkpoint maximizing
 * accuracy - source_lambda * mean length on a validation slice, then runs
 * run_long2short_suite on it. Writes source.txt next to l2s_table.csv.
 */
L2sAblationResult run_ablation_l2s(const RunConfig& config);

}  // namespace minicot::harness
