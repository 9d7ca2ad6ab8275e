#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "graphgrade/random.hpp"
#include "graphgrade/report.hpp"

namespace graphgrade::report {

namespace {

constexpr std::uint64_t kEvalStream = 0x6576616c;  // episode stream id for evaluation

using WorkerPredictor = std::function<std::vector<int>(int worker, const episodes::Episode&)>;

int assignment_m(const episodes::EpisodePool& pool, const episodes::Episode& e) {
  for (const auto& a : pool.assignments()) {
    if (a.module_id == e.module_id && a.assignment_id == e.assignment_id) return a.m;
  }
  throw std::logic_error("episode assignment is not in the pool");
}

EvalResult run(const std::string& model, const episodes::EpisodePool& pool, const episodes::EpisodeSpec& spec,
               int n_episodes, std::uint64_t seed, int workers, const WorkerPredictor& predict) {
  spec.validate();
  if (n_episodes < 1) throw std::invalid_argument("episode count must be at least 1");
  if (pool.feasible(spec).empty()) {
    throw episodes::NoFeasibleAssignment("no assignment is feasible for " + std::to_string(spec.n_way) + "-way " +
                                         std::to_string(spec.k_shot) + "-shot evaluation");
  }
  EvalResult result;
  result.model = model;
  result.spec = spec;
  result.seed = seed;
  result.episodes.resize(static_cast<std::size_t>(n_episodes));
  const std::uint64_t stream = derive_seed(seed, kEvalStream);

  std::vector<char> done(static_cast<std::size_t>(n_episodes), 0);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&](int worker) {
    for (int i = next++; i < n_episodes; i = next++) {
      try {
        const auto episode = episodes::sample_indexed(pool, spec, stream, static_cast<std::uint64_t>(i));
        EpisodeRecord rec;
        rec.module_id = episode.module_id;
        rec.assignment_id = episode.assignment_id;
        rec.m = assignment_m(pool, episode);
        for (const auto& item : episode.query) rec.true_grades.push_back(item.grade);
        rec.predicted_grades = predict(worker, episode);
        if (rec.predicted_grades.size() != rec.true_grades.size()) {
          throw std::logic_error("predictor returned the wrong number of grades");
        }
        for (int p : rec.predicted_grades) rec.failures += p == kFailedPrediction;
        rec.accuracy = accuracy(rec.predicted_grades, rec.true_grades);
        result.episodes[static_cast<std::size_t>(i)] = std::move(rec);
        done[static_cast<std::size_t>(i)] = 1;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n_episodes;
      }
    }
  };
  const int threads = std::max(1, std::min(workers, n_episodes));
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool_threads;
    for (int w = 0; w < threads; ++w) pool_threads.emplace_back(work, w);
    for (auto& t : pool_threads) t.join();
  }
  if (error) {
    EvalResult partial = result;
    partial.episodes.clear();
    for (int i = 0; i < n_episodes; ++i) {
      if (done[static_cast<std::size_t>(i)]) partial.episodes.push_back(result.episodes[static_cast<std::size_t>(i)]);
    }
    finalize(partial);
    try {
      std::rethrow_exception(error);
    } catch (const std::exception& e) {
      throw EvaluationAborted(e.what(), std::move(partial));
    }
  }
  finalize(result);
  return result;
}

std::vector<int> to_grades(const episodes::Episode& episode, const std::vector<int>& predicted) {
  std::vector<int> out;
  out.reserve(predicted.size());
  for (int c : predicted) out.push_back(episode.class_grades.at(static_cast<std::size_t>(c)));
  return out;
}

}  // namespace

EvalResult evaluate_predictor(const std::string& model, const episodes::EpisodePool& pool,
                              const episodes::EpisodeSpec& spec, int n_episodes, std::uint64_t seed,
                              const Predictor& predictor, int workers) {
  return run(model, pool, spec, n_episodes, seed, workers,
             [&](int, const episodes::Episode& e) { return predictor(e); });
}

episodes::PoolSplit checkpoint_split(const meta::Checkpoint& checkpoint, const DatasetManifest& manifest) {
  const auto pool = episodes::EpisodePool::from_manifest(
      manifest, meta::pool_options_for(checkpoint.model->encoder().config()));
  return episodes::split_pool(pool, checkpoint.record.split);
}

EvalResult evaluate_checkpoint(const meta::Checkpoint& checkpoint, const DatasetManifest& manifest,
                               const std::filesystem::path& dataset_root, const episodes::EpisodeSpec& spec,
                               int n_episodes, std::uint64_t seed, int workers) {
  if (!checkpoint.model) throw std::invalid_argument("checkpoint has no model");
  const meta::MetaModel& model = *checkpoint.model;
  if (model.head() != nullptr && model.options().n_way != spec.n_way) {
    throw std::invalid_argument("checkpoint head is " + std::to_string(model.options().n_way) +
                                "-way but evaluation asks for " + std::to_string(spec.n_way) + "-way");
  }
  const auto split = checkpoint_split(checkpoint, manifest);
  const auto features = meta::FeatureStore::load(manifest, dataset_root, model.encoder());
  const std::string name = meta::to_string(model.algorithm());

  EvalResult result;
  if (meta::supports_embedding_path(model)) {
    std::vector<std::string> ids;
    for (const auto& a : split.eval.assignments()) {
      for (const auto& [grade, members] : a.by_grade) ids.insert(ids.end(), members.begin(), members.end());
    }
    const auto cache = meta::EmbeddingCache::build(features, model, ids);
    result = run(name, split.eval, spec, n_episodes, seed, workers, [&](int, const episodes::Episode& e) {
      std::vector<int> sl;
      std::vector<int> ql;
      for (const auto& item : e.support) sl.push_back(item.label);
      for (const auto& item : e.query) ql.push_back(item.label);
      const auto out =
          meta::episode_from_embeddings(model, cache.rows(e.support), sl, cache.rows(e.query), ql, e.n_way());
      return to_grades(e, out.predicted);
    });
  } else {
    const int threads = std::max(1, workers);
    std::vector<std::unique_ptr<meta::MetaModel>> replicas;
    for (int w = 0; w < threads; ++w) replicas.push_back(model.clone());
    result = run(name, split.eval, spec, n_episodes, seed, threads, [&](int w, const episodes::Episode& e) {
      meta::MetaModel& replica = *replicas[static_cast<std::size_t>(w)];
      const auto out = meta::episode_loss(replica, features.tensors(e, replica.encoder()));
      return to_grades(e, out.predicted);
    });
  }
  result.split_mode = split.mode();
  result.modality = encoder::to_string(model.encoder().config().modality);
  return result;
}

}  // namespace graphgrade::report
