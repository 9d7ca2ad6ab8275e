#include <opencv2/imgcodecs.hpp>

#include "graphgrade/metalearn.hpp"

namespace graphgrade::meta {

episodes::PoolOptions pool_options_for(const encoder::EncoderConfig& config) {
  return {config.uses_graph()};
}

FeatureStore FeatureStore::load(const DatasetManifest& manifest, const std::filesystem::path& root,
                                const encoder::MultimodalEncoder& encoder) {
  FeatureStore store;
  const bool graphs = encoder.config().uses_graph();
  for (const auto& module : manifest.modules) {
    for (const auto& assignment : module.assignments) {
      for (const auto& s : assignment.submissions) {
        Row row;
        if (graphs) {
          if (!s.graph_crop) continue;
          const auto path = root / *s.graph_crop;
          cv::Mat pixels = cv::imread(path.string(), cv::IMREAD_COLOR);
          if (pixels.empty()) throw std::runtime_error("cannot read graph crop " + path.string());
          row.graph = encoder.prepare_graph(GraphImage(pixels));
        }
        row.text = encoder.prepare_text(s.extracted_text);
        store.rows_.emplace(s.id, std::move(row));
      }
    }
  }
  return store;
}

std::vector<std::string> FeatureStore::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, row] : rows_) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

encoder::PreparedBatch FeatureStore::batch(const std::vector<std::string>& ids,
                                           const encoder::MultimodalEncoder& encoder) const {
  std::vector<const Mat*> graphs;
  std::vector<const Mat*> texts;
  for (const auto& id : ids) {
    auto it = rows_.find(id);
    if (it == rows_.end()) throw std::out_of_range("no prepared features for submission '" + id + "'");
    if (encoder.config().uses_graph()) graphs.push_back(&it->second.graph);
    if (encoder.config().uses_text()) texts.push_back(&it->second.text);
  }
  encoder::PreparedBatch b = encoder.stack(graphs, texts);
  b.rows = static_cast<nn::Index>(ids.size());
  return b;
}

EpisodeTensors FeatureStore::tensors(const episodes::Episode& episode,
                                     const encoder::MultimodalEncoder& encoder) const {
  EpisodeTensors t;
  t.n_way = episode.n_way();
  std::vector<std::string> s;
  std::vector<std::string> q;
  for (const auto& item : episode.support) {
    s.push_back(item.submission_id);
    t.support_labels.push_back(item.label);
  }
  for (const auto& item : episode.query) {
    q.push_back(item.submission_id);
    t.query_labels.push_back(item.label);
  }
  t.support = batch(s, encoder);
  t.query = batch(q, encoder);
  return t;
}

EmbeddingCache EmbeddingCache::build(const FeatureStore& features, const MetaModel& model,
                                     const std::vector<std::string>& ids) {
  EmbeddingCache cache;
  const Mat emb = model.encoder().embed_prepared(features.batch(ids, model.encoder()));
  for (std::size_t i = 0; i < ids.size(); ++i) cache.rows_[ids[i]] = emb.row(static_cast<nn::Index>(i));
  return cache;
}

const Eigen::RowVectorXd& EmbeddingCache::at(const std::string& id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw std::out_of_range("no cached embedding for '" + id + "'");
  return it->second;
}

Mat EmbeddingCache::rows(const std::vector<episodes::Item>& items) const {
  if (items.empty()) return Mat();
  Mat out(static_cast<nn::Index>(items.size()), at(items.front().submission_id).size());
  for (std::size_t i = 0; i < items.size(); ++i) out.row(static_cast<nn::Index>(i)) = at(items[i].submission_id);
  return out;
}

}  // namespace graphgrade::meta
