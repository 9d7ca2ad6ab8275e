#include "graphgrade/dataset.hpp"

namespace graphgrade {

std::vector<StatsRow> compute_stats(const DatasetManifest& manifest) {
  std::vector<StatsRow> rows;
  for (const auto& module : manifest.modules) {
    for (const auto& assignment : module.assignments) {
      const int m = assignment.rubric.m();
      if (m < 1) continue;
      std::vector<int> counts(static_cast<std::size_t>(1) << m, 0);
      for (const auto& a : assignment.annotations) ++counts[static_cast<std::size_t>(a.grade)];
      for (std::size_t grade = 0; grade < counts.size(); ++grade) {
        rows.push_back({module.id, assignment.id, static_cast<int>(grade), counts[grade]});
      }
    }
  }
  return rows;
}

}  // namespace graphgrade
