#include <cmath>

#include "graphgrade/metalearn.hpp"

namespace graphgrade::meta {

using nn::Index;
using nn::Tape;
using nn::Var;

namespace {

constexpr double kDistanceEps = 1e-10;

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::matching: return "matching";
    case Algorithm::proto: return "proto";
    case Algorithm::relation: return "relation";
    case Algorithm::fomaml: return "fomaml";
    case Algorithm::protofomaml: return "protofomaml";
  }
  return "proto";
}

Algorithm algorithm_from_string(const std::string& text) {
  for (Algorithm a : all_algorithms()) {
    if (to_string(a) == text) return a;
  }
  throw std::invalid_argument("unknown algorithm '" + text + "'");
}

const std::vector<Algorithm>& all_algorithms() {
  static const std::vector<Algorithm> all = {Algorithm::matching, Algorithm::proto, Algorithm::relation,
                                             Algorithm::fomaml, Algorithm::protofomaml};
  return all;
}

std::string to_string(DistanceMode d) {
  return d == DistanceMode::euclidean ? "euclidean" : "squared_euclidean";
}

DistanceMode distance_from_string(const std::string& text) {
  if (text == "euclidean") return DistanceMode::euclidean;
  if (text == "squared_euclidean") return DistanceMode::squared_euclidean;
  throw std::invalid_argument("unknown distance mode '" + text + "'");
}

std::string to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "sum"; }

Aggregation aggregation_from_string(const std::string& text) {
  if (text == "mean") return Aggregation::mean;
  if (text == "sum") return Aggregation::sum;
  throw std::invalid_argument("unknown aggregation '" + text + "'");
}

std::string to_string(AdaptScope s) { return s == AdaptScope::full ? "full" : "head_only"; }

AdaptScope scope_from_string(const std::string& text) {
  if (text == "full") return AdaptScope::full;
  if (text == "head_only") return AdaptScope::head_only;
  throw std::invalid_argument("unknown adaptation scope '" + text + "'");
}

Eigen::VectorXd matching_attention(const Mat& support, const Eigen::RowVectorXd& query) {
  if (support.rows() < 1) throw std::invalid_argument("matching: empty support set");
  if (support.cols() != query.size()) throw encoder::DimensionMismatch("matching: dimension mismatch");
  Eigen::VectorXd logits = support * query.transpose();
  const double mx = logits.maxCoeff();
  Eigen::VectorXd a = (logits.array() - mx).exp();
  return a / a.sum();
}

Eigen::VectorXd matching_predict(const Mat& support, const std::vector<int>& labels, int n_way,
                                 const Eigen::RowVectorXd& query) {
  if (support.cols() != query.size()) throw encoder::DimensionMismatch("matching: dimension mismatch");
  Tape tape;
  const Var lp = matching_log_probs(tape.constant(support), labels, n_way, tape.constant(Mat(query)));
  return lp.value().row(0).transpose().array().exp();
}

Mat proto_compute(const Mat& support, const std::vector<int>& labels, int n_way) {
  Tape tape;
  return nn::group_reduce(tape.constant(support), labels, n_way, true).value();
}

Eigen::VectorXd proto_predict(const Mat& prototypes, const Eigen::RowVectorXd& query, DistanceMode mode) {
  if (prototypes.rows() < 2) throw std::invalid_argument("proto_predict: need at least two prototypes");
  if (prototypes.cols() != query.size()) throw encoder::DimensionMismatch("proto_predict: dimension mismatch");
  Tape tape;
  const Var lp = nn::log_softmax(proto_logits(tape.constant(prototypes), tape.constant(Mat(query)), mode));
  return lp.value().row(0).transpose().array().exp();
}

HeadInit protomaml_init_head(const Mat& prototypes) {
  HeadInit h;
  h.weight = 2.0 * prototypes;
  h.bias = -prototypes.rowwise().squaredNorm();
  return h;
}

RelationModule RelationModule::create(nn::ParamStore& store, int dim, int hidden, std::mt19937_64& rng) {
  RelationModule r;
  r.hidden = nn::Linear::create(store, "relation.hidden", 2 * dim, hidden, rng);
  r.out = nn::Linear::create(store, "relation.out", hidden, 1, rng);
  return r;
}

Var RelationModule::score(Tape& tape, const Var& pairs) const {
  return nn::sigmoid(out(tape, nn::relu(hidden(tape, pairs))));
}

Mat relation_class_repr(const Mat& support, const std::vector<int>& labels, int n_way, Aggregation agg) {
  Tape tape;
  return nn::group_reduce(tape.constant(support), labels, n_way, agg == Aggregation::mean).value();
}

Eigen::VectorXd relation_predict(const Mat& support, const std::vector<int>& labels, int n_way,
                                 const Eigen::RowVectorXd& query, const RelationModule& f_phi,
                                 Aggregation agg) {
  if (support.cols() != query.size()) throw encoder::DimensionMismatch("relation: dimension mismatch");
  Tape tape;
  nn::FrozenScope frozen(tape, true);
  const Var repr = nn::group_reduce(tape.constant(support), labels, n_way, agg == Aggregation::mean);
  const Var r = relation_scores(tape, f_phi, repr, tape.constant(Mat(query)));
  return r.value().row(0).transpose();
}

Var matching_log_probs(const Var& support, const std::vector<int>& labels, int n_way, const Var& query) {
  if (support.cols() != query.cols()) throw encoder::DimensionMismatch("matching: dimension mismatch");
  if (support.rows() < 1) throw std::invalid_argument("matching: empty support set");
  return nn::class_log_probs(nn::matmul_nt(query, support), labels, n_way);
}

Var proto_logits(const Var& prototypes, const Var& query, DistanceMode mode) {
  if (prototypes.cols() != query.cols()) throw encoder::DimensionMismatch("proto: dimension mismatch");
  Var d = nn::sq_dist(query, prototypes);
  if (mode == DistanceMode::euclidean) d = nn::sqrt_eps(d, kDistanceEps);
  return nn::scale(d, -1.0);
}

Var relation_scores(Tape& tape, const RelationModule& f_phi, const Var& class_repr, const Var& query) {
  if (class_repr.cols() != query.cols()) throw encoder::DimensionMismatch("relation: dimension mismatch");
  const Index n = class_repr.rows();
  const Index q = query.rows();
  std::vector<int> class_rows;
  std::vector<int> query_rows;
  for (Index i = 0; i < q; ++i) {
    for (Index k = 0; k < n; ++k) {
      class_rows.push_back(static_cast<int>(k));
      query_rows.push_back(static_cast<int>(i));
    }
  }
  const Var pairs = nn::concat_cols(nn::select_rows(class_repr, class_rows), nn::select_rows(query, query_rows));
  return nn::reshape(f_phi.score(tape, pairs), q, n);
}

void InnerLoopConfig::validate() const {
  if (!(alpha_head >= 0.0) || !(alpha_encoder >= 0.0)) {
    throw std::invalid_argument("inner learning rates must be non-negative");
  }
  if (steps < 0) throw std::invalid_argument("inner steps must be non-negative");
}

void OuterLoopConfig::validate() const {
  if (!(beta >= 0.0)) throw std::invalid_argument("outer learning rate must be non-negative");
  if (episodes_per_epoch < 1) throw std::invalid_argument("episodes_per_epoch must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (meta_batch < 1) throw std::invalid_argument("meta_batch must be positive");
}

}  // namespace graphgrade::meta
