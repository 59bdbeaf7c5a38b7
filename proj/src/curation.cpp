#include "minicot/curation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "minicot/sampling.hpp"

namespace minicot::curation {

void CurationConfig::validate() const {
  if (guess_attempts < 1)
    throw std::invalid_argument("CurationConfig: guess_attempts must be >= 1");
  if (pass_rate_attempts < 1)
    throw std::invalid_argument("CurationConfig: pass_rate_attempts must be >= 1");
  if (!(bucket_lower > 0.0 && bucket_lower < bucket_upper && bucket_upper < 1.0))
    throw std::invalid_argument("CurationConfig: bucket edges must satisfy 0 < lower < upper < 1");
  if (!(case_agree_threshold > 0.0 && case_agree_threshold <= 1.0))
    throw std::invalid_argument("CurationConfig: case_agree_threshold must be in (0, 1]");
  if (!(suite_accept_threshold > 0.0 && suite_accept_threshold <= 1.0))
    throw std::invalid_argument("CurationConfig: suite_accept_threshold must be in (0, 1]");
  if (cases_per_problem < 1)
    throw std::invalid_argument("CurationConfig: cases_per_problem must be >= 1");
  if (submissions_sampled < 1)
    throw std::invalid_argument("CurationConfig: submissions_sampled must be >= 1");
  if (!(guess_temperature > 0.0))
    throw std::invalid_argument("CurationConfig: guess_temperature must be > 0");
}

const char* bucket_name(Bucket b) {
  switch (b) {
    case Bucket::easy: return "easy";
    case Bucket::moderate: return "moderate";
    case Bucket::hard: return "hard";
  }
  return "?";
}

Bucket difficulty_bucket(double pass_rate, const CurationConfig& config) {
  config.validate();
  if (!(pass_rate >= 0.0 && pass_rate <= 1.0))
    throw std::invalid_argument("difficulty_bucket: pass_rate outside [0, 1]");
  if (pass_rate < config.bucket_lower) return Bucket::hard;
  if (pass_rate >= config.bucket_upper) return Bucket::easy;
  return Bucket::moderate;
}

FilterReport filter_easy_to_hack(const std::vector<envs::Problem>& problems,
                                 const Guesser& guesser, int guess_attempts,
                                 std::uint64_t seed) {
  if (guess_attempts < 1)
    throw std::invalid_argument("filter_easy_to_hack: guess_attempts must be >= 1");
  if (!guesser) throw std::invalid_argument("filter_easy_to_hack: null guesser");
  FilterReport report;
  for (const auto& p : problems) {
    auto rng = rng::stream(seed, {rng::CURATION_GUESS, static_cast<std::uint64_t>(p.id)});
    bool hacked = false;
    for (int a = 0; a < guess_attempts && !hacked; ++a) {
      const auto guess = guesser(p, rng);
      hacked = p.ground_truth.size() == 1 && guess == p.ground_truth[0];
    }
    if (hacked)
      report.removed_ids.push_back(p.id);
    else
      report.kept.push_back(p);
  }
  return report;
}

ValidationResult validate_test_cases(const std::vector<std::int64_t>& cases,
                                     const std::vector<Submission>& submissions,
                                     const CurationConfig& config) {
  config.validate();
  if (submissions.empty())
    throw std::invalid_argument("validate_test_cases: submissions must be non-empty");
  const auto n = submissions.size();

  ValidationResult result;
  result.votes.reserve(cases.size());
  for (std::size_t c = 0; c < cases.size(); ++c) {
    CaseVote vote;
    vote.input = cases[c];
    vote.outputs.reserve(n);
    std::map<std::int64_t, std::size_t> tally;
    for (const auto& sub : submissions) {
      const auto out = sub(cases[c]);
      vote.outputs.push_back(out);
      tally[out] += 1;
    }
    // Majority value; ties resolve to the smaller value (map order) so the
    // protocol stays deterministic even with permissive thresholds.
    std::size_t best_count = 0;
    for (const auto& [value, count] : tally) {
      if (count > best_count) {
        best_count = count;
        vote.expected = value;
      }
    }
    vote.selected =
        static_cast<double>(best_count) / static_cast<double>(n) >= config.case_agree_threshold;
    if (vote.selected) result.selected_indices.push_back(c);
    result.votes.push_back(std::move(vote));
  }

  result.submission_passed.assign(n, true);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto c : result.selected_indices)
      if (result.votes[c].outputs[i] != result.votes[c].expected) {
        result.submission_passed[i] = false;
        break;
      }

  if (!result.selected_indices.empty()) {
    const auto passed = static_cast<std::size_t>(
        std::count(result.submission_passed.begin(), result.submission_passed.end(), true));
    result.accepted = static_cast<double>(passed) / static_cast<double>(n) >=
                      config.suite_accept_threshold;
  }
  return result;
}

CurationReport curate_problem_set(const std::vector<envs::Problem>& problems,
                                  const policy::ParamVector& params,
                                  const policy::PolicySpec& spec, const CurationConfig& config,
                                  std::uint64_t seed) {
  config.validate();
  const auto filtered =
      filter_easy_to_hack(problems, envs::guess_answer, config.guess_attempts, seed);

  CurationReport report;
  report.entries.reserve(problems.size());
  for (const auto& p : problems) {
    ProblemCuration entry;
    entry.problem_id = p.id;
    entry.pass_rate = sampling::estimate_pass_rate(params, spec, p, config.pass_rate_attempts,
                                                   config.guess_temperature, seed);
    entry.bucket = difficulty_bucket(entry.pass_rate, config);
    entry.removed_as_hackable =
        std::find(filtered.removed_ids.begin(), filtered.removed_ids.end(), p.id) !=
        filtered.removed_ids.end();
    if (!entry.removed_as_hackable) report.kept_ids.push_back(p.id);
    report.entries.push_back(entry);
  }
  return report;
}

void save_report(const CurationReport& report, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("save_report: cannot open " + path);
  std::fprintf(f, "minicot-curation v1 problems=%zu kept=%zu\n", report.entries.size(),
               report.kept_ids.size());
  for (const auto& e : report.entries)
    std::fprintf(f, "%lld pass_rate=%.6f bucket=%s removed=%d\n",
                 static_cast<long long>(e.problem_id), e.pass_rate, bucket_name(e.bucket),
                 e.removed_as_hackable ? 1 : 0);
  std::fprintf(f, "kept:");
  for (const auto id : report.kept_ids) std::fprintf(f, " %lld", static_cast<long long>(id));
  std::fprintf(f, "\n");
  std::fclose(f);
}

}  // namespace minicot::curation
