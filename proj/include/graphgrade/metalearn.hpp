#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "graphgrade/encoder.hpp"
#include "graphgrade/episodes.hpp"
#include "graphgrade/nn.hpp"

namespace graphgrade::meta {

using nn::Mat;

enum class Algorithm { matching, proto, relation, fomaml, protofomaml };
enum class DistanceMode { euclidean, squared_euclidean };
enum class Aggregation { mean, sum };
/// full adapts encoder and head (paper); head_only is a CPU-budget mode, not the paper's method.
enum class AdaptScope { full, head_only };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& text);
std::string to_string(DistanceMode d);
DistanceMode distance_from_string(const std::string& text);
std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& text);
std::string to_string(AdaptScope s);
AdaptScope scope_from_string(const std::string& text);
const std::vector<Algorithm>& all_algorithms();

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Closed-form predictions on plain matrices. Rows of `support` are embeddings; labels are
// episode class indices in [0, n_way).

/// Softmax over support of the dot products with the query.
Eigen::VectorXd matching_attention(const Mat& support, const Eigen::RowVectorXd& query);
Eigen::VectorXd matching_predict(const Mat& support, const std::vector<int>& labels, int n_way,
                                 const Eigen::RowVectorXd& query);
Mat proto_compute(const Mat& support, const std::vector<int>& labels, int n_way);
Eigen::VectorXd proto_predict(const Mat& prototypes, const Eigen::RowVectorXd& query, DistanceMode mode);

struct HeadInit {
  Mat weight;             // n_way x D, row k = 2 c_k
  Eigen::VectorXd bias;   // b_k = -|c_k|^2
};
HeadInit protomaml_init_head(const Mat& prototypes);

/// f_phi: concat(class representation, query) -> linear -> ReLU -> linear -> sigmoid.
struct RelationModule {
  nn::Linear hidden;
  nn::Linear out;

  static RelationModule create(nn::ParamStore& store, int dim, int hidden, std::mt19937_64& rng);
  /// pairs: rows of 2D values; returns rows x 1 scores in (0, 1).
  nn::Var score(nn::Tape& tape, const nn::Var& pairs) const;
};

Mat relation_class_repr(const Mat& support, const std::vector<int>& labels, int n_way, Aggregation agg);
Eigen::VectorXd relation_predict(const Mat& support, const std::vector<int>& labels, int n_way,
                                 const Eigen::RowVectorXd& query, const RelationModule& f_phi,
                                 Aggregation agg);

// Differentiable building blocks.
nn::Var matching_log_probs(const nn::Var& support, const std::vector<int>& labels, int n_way,
                           const nn::Var& query);
nn::Var proto_logits(const nn::Var& prototypes, const nn::Var& query, DistanceMode mode);
nn::Var relation_scores(nn::Tape& tape, const RelationModule& f_phi, const nn::Var& class_repr,
                        const nn::Var& query);

struct InnerLoopConfig {
  double alpha_head = 0.01;
  double alpha_encoder = 0.001;
  int steps = 100;
  AdaptScope scope = AdaptScope::full;

  void validate() const;
};

struct OuterLoopConfig {
  double beta = 1e-4;
  int episodes_per_epoch = 100;
  int epochs = 1000;
  int meta_batch = 1;

  void validate() const;
};

using ParamVector = std::vector<Mat>;
/// Returns the loss at theta and, when grad is non-null, fills it with d(loss)/d(theta).
using LossAndGrad = std::function<double(const ParamVector& theta, ParamVector* grad)>;

/// `steps` plain gradient-descent updates with per-block rates; theta is not modified.
ParamVector inner_adapt(const ParamVector& theta, const std::vector<double>& rates, int steps,
                        const LossAndGrad& support_loss);

struct FomamlTask {
  LossAndGrad support_loss;
  LossAndGrad query_loss;
};

/// theta - beta * sum over tasks of grad L_query(theta'_task), theta' from inner_adapt.
ParamVector fomaml_outer_step(const ParamVector& theta, const std::vector<FomamlTask>& tasks,
                              const std::vector<double>& inner_rates, int inner_steps, double beta);

struct ModelOptions {
  Algorithm algorithm = Algorithm::proto;
  int n_way = 2;
  DistanceMode distance = DistanceMode::euclidean;
  Aggregation relation_aggregation = Aggregation::mean;
  int relation_hidden = 64;
  InnerLoopConfig inner;

  void validate() const;
};

nlohmann::json to_json(const ModelOptions& options);
ModelOptions model_options_from_json(const nlohmann::json& j);

class MetaModel {
 public:
  MetaModel(const ModelOptions& options, const encoder::EncoderConfig& encoder_config, std::uint64_t seed);
  MetaModel(const MetaModel&) = delete;
  MetaModel& operator=(const MetaModel&) = delete;

  const ModelOptions& options() const { return options_; }
  Algorithm algorithm() const { return options_.algorithm; }
  std::uint64_t seed() const { return seed_; }
  const encoder::MultimodalEncoder& encoder() const { return *encoder_; }
  int dim() const { return encoder_->dim(); }

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::vector<nn::Parameter*> encoder_params();
  std::vector<nn::Parameter*> head_params();
  /// Parameters the outer loop updates (encoder ones only when trainable).
  std::vector<nn::Parameter*> trainable_params();

  const RelationModule* relation() const { return relation_ ? &*relation_ : nullptr; }
  const nn::Linear* head() const { return head_ ? &*head_ : nullptr; }

  std::unique_ptr<MetaModel> clone() const;

 private:
  ModelOptions options_;
  std::uint64_t seed_;
  nn::ParamStore params_;
  std::unique_ptr<encoder::MultimodalEncoder> encoder_;
  std::optional<RelationModule> relation_;
  std::optional<nn::Linear> head_;
};

struct EpisodeTensors {
  encoder::PreparedBatch support;
  std::vector<int> support_labels;
  encoder::PreparedBatch query;
  std::vector<int> query_labels;
  int n_way = 2;
};

struct EpisodeOutcome {
  double loss = 0.0;
  double accuracy = 0.0;
  Mat query_probs;              // Q x n_way; relation scores are normalized per row
  std::vector<int> predicted;   // class index per query
};

/// Inference: loss and accuracy on the query set. (Proto)FOMAML adapts a copy of the
/// parameters on the support set first; the model is left unchanged.
EpisodeOutcome episode_loss(MetaModel& model, const EpisodeTensors& episode);

/// Training: adds this episode's gradient (first-order for the MAML variants) to each
/// parameter's grad and returns the pre-update outcome.
EpisodeOutcome episode_step(MetaModel& model, const EpisodeTensors& episode);

/// Inference from precomputed embeddings. Not available for full-scope MAML variants,
/// which must adapt the encoder.
EpisodeOutcome episode_from_embeddings(const MetaModel& model, const Mat& support,
                                       const std::vector<int>& support_labels, const Mat& query,
                                       const std::vector<int>& query_labels, int n_way);
bool supports_embedding_path(const MetaModel& model);

struct GradePrediction {
  int grade = 0;
  std::vector<int> criteria;
  std::vector<int> class_grades;  // the support set's grades, ascending
  std::vector<double> class_probs;
};

/// Single-query inference: the classes are the distinct grades of the support set.
GradePrediction predict_grade(MetaModel& model, const std::vector<encoder::EncoderInput>& support,
                              const std::vector<int>& support_grades, const encoder::EncoderInput& query, int m);

/// Prepared encoder inputs for every usable submission of a dataset.
class FeatureStore {
 public:
  static FeatureStore load(const DatasetManifest& manifest, const std::filesystem::path& root,
                           const encoder::MultimodalEncoder& encoder);

  bool contains(const std::string& submission_id) const { return rows_.count(submission_id) > 0; }
  std::size_t size() const { return rows_.size(); }
  EpisodeTensors tensors(const episodes::Episode& episode, const encoder::MultimodalEncoder& encoder) const;
  encoder::PreparedBatch batch(const std::vector<std::string>& ids,
                               const encoder::MultimodalEncoder& encoder) const;
  std::vector<std::string> ids() const;

 private:
  struct Row {
    Mat graph;
    Mat text;
  };
  std::unordered_map<std::string, Row> rows_;
};

/// Inference embeddings keyed by submission id.
class EmbeddingCache {
 public:
  static EmbeddingCache build(const FeatureStore& features, const MetaModel& model,
                              const std::vector<std::string>& ids);
  const Eigen::RowVectorXd& at(const std::string& id) const;
  Mat rows(const std::vector<episodes::Item>& items) const;

 private:
  std::unordered_map<std::string, Eigen::RowVectorXd> rows_;
};

episodes::PoolOptions pool_options_for(const encoder::EncoderConfig& config);

struct EpochLog {
  int epoch = 0;  // 0 is the untrained model on the first epoch's episodes
  double mean_loss = 0.0;
  double mean_accuracy = 0.0;

  bool operator==(const EpochLog&) const = default;
};

struct TrainConfig {
  ModelOptions model;
  encoder::EncoderConfig encoder = encoder::EncoderConfig::desk();
  episodes::EpisodeSpec spec;
  OuterLoopConfig outer;
  episodes::SplitConfig split;
  std::uint64_t seed = 0;
  bool log_initial = true;
};

struct TrainingRecord {
  std::uint64_t seed = 0;
  episodes::EpisodeSpec spec;
  OuterLoopConfig outer;
  episodes::SplitConfig split;
  std::string split_mode;
  int epochs_completed = 0;
  std::vector<EpochLog> curve;
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;
  std::unique_ptr<MetaModel> model;
  TrainingRecord record;
};

using EpochCallback = std::function<void(const EpochLog&)>;

Checkpoint meta_train(const TrainConfig& config, const DatasetManifest& manifest,
                      const std::filesystem::path& dataset_root, const EpochCallback& on_epoch = {});

/// Writes `dir/checkpoint.json` atomically: format version, config snapshot, record, parameters.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace graphgrade::meta
