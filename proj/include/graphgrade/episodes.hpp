#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphgrade/dataset.hpp"

namespace graphgrade::episodes {

struct EpisodeSpec {
  int n_way = 2;
  int k_shot = 1;
  int q_per_class = 1;

  void validate() const;
  bool operator==(const EpisodeSpec&) const = default;
};

/// N * (K + q): the fewest items an assignment must hold for one episode.
int min_samples(int n_way, int k_shot, int q_per_class = 1);

using GradeCounts = std::map<int, int>;

/// True iff at least n_way grades have count >= k_shot + q_per_class.
bool is_feasible(const GradeCounts& grade_counts, const EpisodeSpec& spec);

/// Largest K for which (n_way, K, q) is feasible; 0 when none is.
int max_feasible_k(const GradeCounts& grade_counts, int n_way, int q_per_class = 1);

struct Item {
  std::string submission_id;
  int grade = 0;
  int label = 0;  // class index within the episode

  bool operator==(const Item&) const = default;
};

struct Episode {
  std::string module_id;
  std::string assignment_id;
  std::vector<int> class_grades;  // class index -> grade
  std::vector<Item> support;      // class-major, K per class
  std::vector<Item> query;        // class-major, q per class
  std::uint64_t seed = 0;

  int n_way() const { return static_cast<int>(class_grades.size()); }
  bool operator==(const Episode&) const = default;
};

nlohmann::json to_json(const Episode& episode);

class NoFeasibleAssignment : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Annotated submissions grouped by (module, assignment) and grade.
struct AssignmentCells {
  std::string module_id;
  std::string assignment_id;
  int m = 1;
  std::map<int, std::vector<std::string>> by_grade;

  GradeCounts counts() const;
  std::size_t size() const;
};

struct PoolOptions {
  bool require_crop = false;  // meta-learners need a graph crop
};

class EpisodePool {
 public:
  EpisodePool() = default;
  explicit EpisodePool(std::vector<AssignmentCells> assignments)
      : assignments_(std::move(assignments)) {}

  static EpisodePool from_manifest(const DatasetManifest& manifest, const PoolOptions& options = {});

  const std::vector<AssignmentCells>& assignments() const { return assignments_; }
  std::vector<const AssignmentCells*> feasible(const EpisodeSpec& spec) const;
  std::size_t size() const;

 private:
  std::vector<AssignmentCells> assignments_;
};

struct SplitConfig {
  bool disjoint = true;
  double eval_fraction = 0.2;
  int min_cell_for_split = 10;  // smaller cells are shared by both pools
  std::uint64_t seed = 0;
};

struct PoolSplit {
  EpisodePool train;
  EpisodePool eval;
  int shared_cells = 0;
  bool disjoint = true;

  /// "disjoint", "disjoint(shared_cells=N)" or "shared".
  std::string mode() const;
};

PoolSplit split_pool(const EpisodePool& pool, const SplitConfig& config);

/// Assignment uniform over feasible ones, N grades uniform over eligible ones in random class
/// order, then K + q items per grade without replacement (first K go to support).
Episode sample_episode(const EpisodePool& pool, const EpisodeSpec& spec, std::mt19937_64& rng);
Episode sample_episode(const DatasetManifest& manifest, const EpisodeSpec& spec,
                       std::mt19937_64& rng);

/// Episode `index` of the stream identified by `master_seed`.
Episode sample_indexed(const EpisodePool& pool, const EpisodeSpec& spec, std::uint64_t master_seed,
                       std::uint64_t index);

struct AssignmentFeasibility {
  std::string module_id;
  std::string assignment_id;
  GradeCounts grade_counts;
  std::vector<EpisodeSpec> feasible_specs;
  bool usable = false;
};

struct FeasibilityReport {
  std::vector<AssignmentFeasibility> assignments;
  const AssignmentFeasibility* find(const std::string& module_id,
                                    const std::string& assignment_id) const;
};

/// Grade counts include zero-count grades up to 2^m - 1.
FeasibilityReport feasibility_report(const DatasetManifest& manifest,
                                     const std::vector<EpisodeSpec>& specs);

nlohmann::json to_json(const FeasibilityReport& report);

}  // namespace graphgrade::episodes
