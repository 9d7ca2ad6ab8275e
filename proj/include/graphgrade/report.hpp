#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphgrade/episodes.hpp"
#include "graphgrade/metalearn.hpp"

namespace graphgrade::report {

/// Exact-match fraction. Throws on empty input or length mismatch.
double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

struct Aggregate {
  double mean = 0.0;
  std::optional<double> std;        // sample standard deviation (ddof = 1), absent for n < 2
  std::optional<double> ci95_half;  // normal approximation 1.96 * std / sqrt(n)
};

Aggregate aggregate(const std::vector<double>& values);

/// Predicted grade of -1 marks a failed prediction (counted as incorrect).
inline constexpr int kFailedPrediction = -1;

struct EpisodeRecord {
  std::string module_id;
  std::string assignment_id;
  int m = 1;
  std::vector<int> true_grades;
  std::vector<int> predicted_grades;
  double accuracy = 0.0;
  int failures = 0;
};

struct EvalResult {
  std::string model;
  episodes::EpisodeSpec spec;
  std::uint64_t seed = 0;
  std::string split_mode;
  std::string modality;
  std::vector<EpisodeRecord> episodes;

  // Filled by finalize().
  int n_episodes = 0;
  double mean = 0.0;
  std::optional<double> std;
  std::optional<double> ci95_half;
  int failures = 0;
  std::vector<double> per_criterion_accuracy;

  std::vector<double> accuracies() const;
  bool operator==(const EvalResult&) const = default;
};

bool operator==(const EpisodeRecord& a, const EpisodeRecord& b);

void finalize(EvalResult& result);

/// Raised when an evaluation stops early; carries the episodes completed before the failure.
class EvaluationAborted : public std::runtime_error {
 public:
  EvaluationAborted(const std::string& message, EvalResult partial)
      : std::runtime_error(message), partial_(std::move(partial)) {}
  const EvalResult& partial() const { return partial_; }

 private:
  EvalResult partial_;
};

/// Predicted grade per query item of the episode.
using Predictor = std::function<std::vector<int>(const episodes::Episode&)>;

EvalResult evaluate_predictor(const std::string& model, const episodes::EpisodePool& pool,
                              const episodes::EpisodeSpec& spec, int n_episodes, std::uint64_t seed,
                              const Predictor& predictor, int workers = 1);

/// Episodes come from the evaluation side of the checkpoint's recorded split.
EvalResult evaluate_checkpoint(const meta::Checkpoint& checkpoint, const DatasetManifest& manifest,
                               const std::filesystem::path& dataset_root, const episodes::EpisodeSpec& spec,
                               int n_episodes, std::uint64_t seed, int workers = 1);

/// The evaluation pool a checkpoint's split produces on a manifest.
episodes::PoolSplit checkpoint_split(const meta::Checkpoint& checkpoint, const DatasetManifest& manifest);

struct BreakdownCell {
  std::string model;
  std::string module_id;
  std::string assignment_id;
  int n_way = 0;
  int k_shot = 0;
  int episodes = 0;
  double mean = 0.0;
};

struct AssignmentBreakdown {
  std::vector<BreakdownCell> cells;
  const BreakdownCell* find(const std::string& model, const std::string& module_id,
                            const std::string& assignment_id, int n_way, int k_shot) const;
};

AssignmentBreakdown breakdown_by_assignment(const std::vector<EvalResult>& results);

struct ResultsRow {
  std::string model;
  int n_way = 0;
  int k_shot = 0;
  int episodes = 0;
  double mean_pct = 0.0;
  std::optional<double> std_pct;
  int failures = 0;

  bool operator==(const ResultsRow&) const = default;
};

/// Percentages rounded to two decimals, as written to CSV.
ResultsRow to_row(const EvalResult& result);

bool is_vllm_model(const std::string& model);

enum class Format { csv, json, png };
Format format_from_string(const std::string& text);

/// <stem>.csv, <stem>.json (with ci95 and breakdowns), <stem>_ablation.csv and
/// compare_{n}way_{k}shot.png. Throws on an empty format list or no results.
std::vector<std::filesystem::path> emit_report(const std::vector<EvalResult>& results,
                                               const std::filesystem::path& out_dir,
                                               const std::vector<Format>& formats,
                                               const std::string& stem = "results");

/// True when the file starts with the results CSV header.
bool is_results_csv(const std::filesystem::path& path);

void write_results_csv(const std::vector<ResultsRow>& rows, const std::filesystem::path& path);
std::vector<ResultsRow> read_results_csv(const std::filesystem::path& path);

/// One bar chart per (N, K): best meta-learner vs best vision LLM.
std::vector<std::filesystem::path> emit_comparison_charts(const std::vector<ResultsRow>& rows,
                                                          const std::filesystem::path& out_dir);

nlohmann::json to_json(const EvalResult& result);

}  // namespace graphgrade::report
