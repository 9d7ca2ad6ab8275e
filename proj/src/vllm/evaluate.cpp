#include "graphgrade/vllm.hpp"

namespace graphgrade::vllm {

report::EvalResult evaluate_vllm(Provider& provider, const ProviderConfig& config, const DatasetManifest& manifest,
                                 const std::filesystem::path& dataset_root, const episodes::EpisodeSpec& spec,
                                 int n_episodes, std::uint64_t seed, const VllmEvalOptions& options, Clock* clock) {
  config.validate();
  if (options.concurrency < 1) throw std::invalid_argument("concurrency must be at least 1");
  const auto full = episodes::EpisodePool::from_manifest(manifest, episodes::PoolOptions{true});
  std::optional<episodes::PoolSplit> split;
  if (options.split) split = episodes::split_pool(full, *options.split);
  const episodes::EpisodePool& pool = split ? split->eval : full;

  std::unordered_map<std::string, std::filesystem::path> crops;
  std::unordered_map<std::string, std::vector<int>> criteria;
  for (const auto& module : manifest.modules) {
    for (const auto& assignment : module.assignments) {
      for (const auto& s : assignment.submissions) {
        if (s.graph_crop) crops[s.id] = dataset_root / *s.graph_crop;
      }
      for (const auto& a : assignment.annotations) criteria[a.submission_id] = a.criteria_vector;
    }
  }
  std::mutex image_mutex;
  std::unordered_map<std::string, ImagePayload> images;
  auto image = [&](const std::string& id) {
    {
      std::lock_guard lock(image_mutex);
      auto it = images.find(id);
      if (it != images.end()) return it->second;
    }
    ImagePayload p = load_image_payload(crops.at(id));
    std::lock_guard lock(image_mutex);
    return images.emplace(id, std::move(p)).first->second;
  };

  SystemClock system_clock;
  std::optional<RateLimiter> limiter;
  if (config.requests_per_minute > 0) limiter.emplace(config.requests_per_minute, clock ? *clock : system_clock);
  Transcript transcript = options.transcript ? Transcript(*options.transcript) : Transcript();

  auto predict = [&](const episodes::Episode& e) {
    const Rubric& rubric = manifest.find_assignment(e.module_id, e.assignment_id)->rubric;
    std::vector<SupportExample> support;
    for (const auto& item : e.support) {
      auto it = criteria.find(item.submission_id);
      support.push_back({item.submission_id, image(item.submission_id),
                         it == criteria.end() ? std::nullopt : std::optional<std::vector<int>>(it->second)});
    }
    std::vector<int> predicted;
    for (const auto& item : e.query) {
      const PromptBundle bundle = build_prompt(rubric, support, image(item.submission_id));
      const GradingResponse r = grade_query(provider, bundle, rubric.m(), config, limiter ? &*limiter : nullptr,
                                            &transcript, item.submission_id);
      predicted.push_back(r.ok() ? *r.grade : report::kFailedPrediction);
    }
    return predicted;
  };
  report::EvalResult result = report::evaluate_predictor("vllm:" + config.model, pool, spec, n_episodes, seed,
                                                         predict, options.concurrency);
  result.split_mode = split ? split->mode() : "all";
  return result;
}

}  // namespace graphgrade::vllm
