#include <algorithm>
#include <cmath>
#include <numeric>

#include "graphgrade/episodes.hpp"
#include "graphgrade/random.hpp"

namespace graphgrade::episodes {

GradeCounts AssignmentCells::counts() const {
  GradeCounts counts;
  for (const auto& [grade, ids] : by_grade) counts[grade] = static_cast<int>(ids.size());
  return counts;
}

std::size_t AssignmentCells::size() const {
  std::size_t n = 0;
  for (const auto& [grade, ids] : by_grade) n += ids.size();
  return n;
}

EpisodePool EpisodePool::from_manifest(const DatasetManifest& manifest,
                                       const PoolOptions& options) {
  std::vector<AssignmentCells> cells;
  for (const auto& module : manifest.modules) {
    for (const auto& assignment : module.assignments) {
      AssignmentCells entry{module.id, assignment.id, assignment.rubric.m(), {}};
      for (const auto& annotation : assignment.annotations) {
        if (options.require_crop) {
          const Submission* s = assignment.submission(annotation.submission_id);
          if (s == nullptr || !s->graph_crop) continue;
        }
        entry.by_grade[annotation.grade].push_back(annotation.submission_id);
      }
      cells.push_back(std::move(entry));
    }
  }
  return EpisodePool(std::move(cells));
}

std::vector<const AssignmentCells*> EpisodePool::feasible(const EpisodeSpec& spec) const {
  std::vector<const AssignmentCells*> out;
  for (const auto& a : assignments_) {
    if (is_feasible(a.counts(), spec)) out.push_back(&a);
  }
  return out;
}

std::size_t EpisodePool::size() const {
  std::size_t n = 0;
  for (const auto& a : assignments_) n += a.size();
  return n;
}

std::string PoolSplit::mode() const {
  if (!disjoint) return "shared";
  if (shared_cells == 0) return "disjoint";
  return "disjoint(shared_cells=" + std::to_string(shared_cells) + ")";
}

PoolSplit split_pool(const EpisodePool& pool, const SplitConfig& config) {
  PoolSplit split;
  split.disjoint = config.disjoint;
  if (!config.disjoint) {
    split.train = pool;
    split.eval = pool;
    return split;
  }
  std::vector<AssignmentCells> train;
  std::vector<AssignmentCells> eval;
  for (const auto& a : pool.assignments()) {
    AssignmentCells t{a.module_id, a.assignment_id, a.m, {}};
    AssignmentCells e{a.module_id, a.assignment_id, a.m, {}};
    for (const auto& [grade, ids] : a.by_grade) {
      const int n = static_cast<int>(ids.size());
      if (n < config.min_cell_for_split) {
        t.by_grade[grade] = ids;
        e.by_grade[grade] = ids;
        if (n > 0) ++split.shared_cells;
        continue;
      }
      std::vector<std::string> shuffled = ids;
      std::sort(shuffled.begin(), shuffled.end());
      const std::string key = a.module_id + "/" + a.assignment_id + "/" + std::to_string(grade);
      std::mt19937_64 rng(derive_seed(config.seed, fnv1a(key)));
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const int n_eval =
          std::max(1, static_cast<int>(std::lround(config.eval_fraction * static_cast<double>(n))));
      e.by_grade[grade].assign(shuffled.begin(), shuffled.begin() + n_eval);
      t.by_grade[grade].assign(shuffled.begin() + n_eval, shuffled.end());
    }
    train.push_back(std::move(t));
    eval.push_back(std::move(e));
  }
  split.train = EpisodePool(std::move(train));
  split.eval = EpisodePool(std::move(eval));
  return split;
}

Episode sample_episode(const EpisodePool& pool, const EpisodeSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const auto feasible = pool.feasible(spec);
  if (feasible.empty()) {
    throw NoFeasibleAssignment("no assignment has " + std::to_string(spec.n_way) +
                               " grades with at least " +
                               std::to_string(spec.k_shot + spec.q_per_class) + " items");
  }
  const AssignmentCells& cells = *feasible[std::uniform_int_distribution<std::size_t>(
      0, feasible.size() - 1)(rng)];

  const int needed = spec.k_shot + spec.q_per_class;
  std::vector<int> eligible;
  for (const auto& [grade, ids] : cells.by_grade) {
    if (static_cast<int>(ids.size()) >= needed) eligible.push_back(grade);
  }
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(static_cast<std::size_t>(spec.n_way));

  Episode episode;
  episode.module_id = cells.module_id;
  episode.assignment_id = cells.assignment_id;
  episode.class_grades = eligible;
  for (int label = 0; label < spec.n_way; ++label) {
    const int grade = eligible[static_cast<std::size_t>(label)];
    const auto& ids = cells.by_grade.at(grade);
    // Partial Fisher-Yates: the first `needed` slots become a uniform sample without replacement.
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < needed; ++i) {
      const auto j = std::uniform_int_distribution<std::size_t>(
          static_cast<std::size_t>(i), order.size() - 1)(rng);
      std::swap(order[static_cast<std::size_t>(i)], order[j]);
    }
    for (int i = 0; i < needed; ++i) {
      Item item{ids[order[static_cast<std::size_t>(i)]], grade, label};
      if (i < spec.k_shot) {
        episode.support.push_back(std::move(item));
      } else {
        episode.query.push_back(std::move(item));
      }
    }
  }
  // Keep both sets class-major.
  auto by_label = [](const Item& a, const Item& b) { return a.label < b.label; };
  std::stable_sort(episode.support.begin(), episode.support.end(), by_label);
  std::stable_sort(episode.query.begin(), episode.query.end(), by_label);
  return episode;
}

Episode sample_episode(const DatasetManifest& manifest, const EpisodeSpec& spec,
                       std::mt19937_64& rng) {
  return sample_episode(EpisodePool::from_manifest(manifest), spec, rng);
}

Episode sample_indexed(const EpisodePool& pool, const EpisodeSpec& spec, std::uint64_t master_seed,
                       std::uint64_t index) {
  const std::uint64_t seed = derive_seed(master_seed, index);
  std::mt19937_64 rng(seed);
  Episode episode = sample_episode(pool, spec, rng);
  episode.seed = seed;
  return episode;
}

nlohmann::json to_json(const Episode& episode) {
  std::vector<std::string> support;
  std::vector<std::string> query;
  for (const auto& s : episode.support) support.push_back(s.submission_id);
  for (const auto& q : episode.query) query.push_back(q.submission_id);
  return {{"assignment", episode.module_id + "/" + episode.assignment_id},
          {"class_grades", episode.class_grades},
          {"support_ids", support},
          {"query_ids", query},
          {"seed", episode.seed}};
}

}  // namespace graphgrade::episodes
