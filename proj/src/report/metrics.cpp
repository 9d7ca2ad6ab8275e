#include <cmath>
#include <numeric>
#include <stdexcept>

#include "graphgrade/dataset.hpp"
#include "graphgrade/report.hpp"

namespace graphgrade::report {

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.empty()) throw std::invalid_argument("accuracy of an empty prediction set");
  if (predicted.size() != truth.size()) throw std::invalid_argument("prediction and truth lengths differ");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate of no values");
  const double n = static_cast<double>(values.size());
  Aggregate a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / (n - 1.0));
    a.ci95_half = 1.96 * *a.std / std::sqrt(n);
  }
  return a;
}

bool operator==(const EpisodeRecord& a, const EpisodeRecord& b) {
  return a.module_id == b.module_id && a.assignment_id == b.assignment_id && a.m == b.m &&
         a.true_grades == b.true_grades && a.predicted_grades == b.predicted_grades &&
         a.accuracy == b.accuracy && a.failures == b.failures;
}

std::vector<double> EvalResult::accuracies() const {
  std::vector<double> out;
  out.reserve(episodes.size());
  for (const auto& e : episodes) out.push_back(e.accuracy);
  return out;
}

void finalize(EvalResult& result) {
  result.n_episodes = static_cast<int>(result.episodes.size());
  result.failures = 0;
  result.per_criterion_accuracy.clear();
  if (result.episodes.empty()) {
    result.mean = 0.0;
    result.std.reset();
    result.ci95_half.reset();
    return;
  }
  const Aggregate a = aggregate(result.accuracies());
  result.mean = a.mean;
  result.std = a.std;
  result.ci95_half = a.ci95_half;

  int max_m = 0;
  for (const auto& e : result.episodes) max_m = std::max(max_m, e.m);
  std::vector<long> hits(static_cast<std::size_t>(max_m), 0);
  std::vector<long> totals(static_cast<std::size_t>(max_m), 0);
  for (const auto& e : result.episodes) {
    result.failures += e.failures;
    const int grades = 1 << e.m;
    for (std::size_t q = 0; q < e.true_grades.size(); ++q) {
      const auto truth = decode_grade(e.true_grades[q], e.m);
      const int p = e.predicted_grades[q];
      const bool valid = p >= 0 && p < grades;
      const auto pred = valid ? decode_grade(p, e.m) : std::vector<int>();
      for (int i = 0; i < e.m; ++i) {
        ++totals[static_cast<std::size_t>(i)];
        if (valid && pred[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(i)]) {
          ++hits[static_cast<std::size_t>(i)];
        }
      }
    }
  }
  for (int i = 0; i < max_m; ++i) {
    const auto k = static_cast<std::size_t>(i);
    result.per_criterion_accuracy.push_back(totals[k] ? static_cast<double>(hits[k]) / totals[k] : 0.0);
  }
}

bool is_vllm_model(const std::string& model) { return model.rfind("vllm:", 0) == 0; }

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

ResultsRow to_row(const EvalResult& result) {
  ResultsRow row;
  row.model = result.model;
  row.n_way = result.spec.n_way;
  row.k_shot = result.spec.k_shot;
  row.episodes = result.n_episodes;
  row.mean_pct = round2(result.mean * 100.0);
  if (result.std) row.std_pct = round2(*result.std * 100.0);
  row.failures = result.failures;
  return row;
}

const BreakdownCell* AssignmentBreakdown::find(const std::string& model, const std::string& module_id,
                                               const std::string& assignment_id, int n_way, int k_shot) const {
  for (const auto& c : cells) {
    if (c.model == model && c.module_id == module_id && c.assignment_id == assignment_id && c.n_way == n_way &&
        c.k_shot == k_shot) {
      return &c;
    }
  }
  return nullptr;
}

AssignmentBreakdown breakdown_by_assignment(const std::vector<EvalResult>& results) {
  AssignmentBreakdown out;
  for (const auto& r : results) {
    const std::size_t first = out.cells.size();
    for (const auto& e : r.episodes) {
      BreakdownCell* cell = nullptr;
      for (std::size_t i = first; i < out.cells.size(); ++i) {
        if (out.cells[i].module_id == e.module_id && out.cells[i].assignment_id == e.assignment_id) {
          cell = &out.cells[i];
        }
      }
      if (!cell) {
        out.cells.push_back({r.model, e.module_id, e.assignment_id, r.spec.n_way, r.spec.k_shot, 0, 0.0});
        cell = &out.cells.back();
      }
      cell->mean += e.accuracy;
      ++cell->episodes;
    }
    for (std::size_t i = first; i < out.cells.size(); ++i) out.cells[i].mean /= out.cells[i].episodes;
  }
  return out;
}

}  // namespace graphgrade::report
