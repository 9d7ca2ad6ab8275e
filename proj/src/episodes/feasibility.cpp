#include "graphgrade/episodes.hpp"

namespace graphgrade::episodes {

void EpisodeSpec::validate() const {
  if (n_way < 2) throw std::invalid_argument("n_way must be at least 2");
  if (k_shot < 1) throw std::invalid_argument("k_shot must be at least 1");
  if (q_per_class < 1) throw std::invalid_argument("q_per_class must be at least 1");
}

int min_samples(int n_way, int k_shot, int q_per_class) {
  EpisodeSpec{n_way, k_shot, q_per_class}.validate();
  return n_way * (k_shot + q_per_class);
}

bool is_feasible(const GradeCounts& grade_counts, const EpisodeSpec& spec) {
  spec.validate();
  int eligible = 0;
  for (const auto& [grade, count] : grade_counts) {
    if (count < 0) throw std::invalid_argument("negative grade count");
    if (count >= spec.k_shot + spec.q_per_class) ++eligible;
  }
  return eligible >= spec.n_way;
}

int max_feasible_k(const GradeCounts& grade_counts, int n_way, int q_per_class) {
  int best = 0;
  int largest = 0;
  for (const auto& [grade, count] : grade_counts) largest = std::max(largest, count);
  for (int k = 1; k + q_per_class <= largest; ++k) {
    if (is_feasible(grade_counts, {n_way, k, q_per_class})) best = k;
  }
  return best;
}

const AssignmentFeasibility* FeasibilityReport::find(const std::string& module_id,
                                                     const std::string& assignment_id) const {
  for (const auto& a : assignments) {
    if (a.module_id == module_id && a.assignment_id == assignment_id) return &a;
  }
  return nullptr;
}

FeasibilityReport feasibility_report(const DatasetManifest& manifest,
                                     const std::vector<EpisodeSpec>& specs) {
  FeasibilityReport report;
  for (const auto& module : manifest.modules) {
    for (const auto& assignment : module.assignments) {
      AssignmentFeasibility entry;
      entry.module_id = module.id;
      entry.assignment_id = assignment.id;
      for (int g = 0; g < assignment.rubric.grade_count(); ++g) entry.grade_counts[g] = 0;
      for (const auto& a : assignment.annotations) ++entry.grade_counts[a.grade];
      for (const auto& spec : specs) {
        if (is_feasible(entry.grade_counts, spec)) entry.feasible_specs.push_back(spec);
      }
      entry.usable = !entry.feasible_specs.empty();
      report.assignments.push_back(std::move(entry));
    }
  }
  return report;
}

nlohmann::json to_json(const FeasibilityReport& report) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& a : report.assignments) {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [g, c] : a.grade_counts) counts[std::to_string(g)] = c;
    nlohmann::json feasible = nlohmann::json::array();
    for (const auto& s : a.feasible_specs) {
      feasible.push_back({{"n_way", s.n_way}, {"k_shot", s.k_shot}, {"q_per_class", s.q_per_class}});
    }
    out.push_back({{"module", a.module_id},
                   {"assignment", a.assignment_id},
                   {"grade_counts", counts},
                   {"feasible", feasible},
                   {"usable", a.usable}});
  }
  return out;
}

}  // namespace graphgrade::episodes
