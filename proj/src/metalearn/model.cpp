#include <algorithm>
#include <cmath>

#include "graphgrade/metalearn.hpp"
#include "graphgrade/random.hpp"

namespace graphgrade::meta {

using nn::Index;
using nn::Parameter;
using nn::Tape;
using nn::Var;

void ModelOptions::validate() const {
  if (n_way < 2) throw std::invalid_argument("n_way must be at least 2");
  if (relation_hidden < 1) throw std::invalid_argument("relation_hidden must be positive");
  inner.validate();
}

nlohmann::json to_json(const ModelOptions& o) {
  return {{"algorithm", to_string(o.algorithm)},
          {"n_way", o.n_way},
          {"distance", to_string(o.distance)},
          {"relation_aggregation", to_string(o.relation_aggregation)},
          {"relation_hidden", o.relation_hidden},
          {"inner",
           {{"alpha_head", o.inner.alpha_head},
            {"alpha_encoder", o.inner.alpha_encoder},
            {"steps", o.inner.steps},
            {"scope", to_string(o.inner.scope)}}}};
}

ModelOptions model_options_from_json(const nlohmann::json& j) {
  ModelOptions o;
  o.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  o.n_way = j.value("n_way", o.n_way);
  o.distance = distance_from_string(j.value("distance", to_string(o.distance)));
  o.relation_aggregation = aggregation_from_string(j.value("relation_aggregation", std::string("mean")));
  o.relation_hidden = j.value("relation_hidden", o.relation_hidden);
  if (auto it = j.find("inner"); it != j.end()) {
    o.inner.alpha_head = it->value("alpha_head", o.inner.alpha_head);
    o.inner.alpha_encoder = it->value("alpha_encoder", o.inner.alpha_encoder);
    o.inner.steps = it->value("steps", o.inner.steps);
    o.inner.scope = scope_from_string(it->value("scope", std::string("full")));
  }
  o.validate();
  return o;
}

MetaModel::MetaModel(const ModelOptions& options, const encoder::EncoderConfig& encoder_config,
                     std::uint64_t seed)
    : options_(options), seed_(seed) {
  options_.validate();
  encoder_ = std::make_unique<encoder::MultimodalEncoder>(encoder_config, params_, derive_seed(seed, 0));
  std::mt19937_64 rng(derive_seed(seed, 1));
  if (options_.algorithm == Algorithm::relation) {
    relation_ = RelationModule::create(params_, encoder_->dim(), options_.relation_hidden, rng);
  }
  if (options_.algorithm == Algorithm::fomaml) {
    head_ = nn::Linear::create(params_, "head", encoder_->dim(), options_.n_way, rng);
  }
}

std::vector<Parameter*> MetaModel::encoder_params() { return params_.with_prefix("encoder."); }

std::vector<Parameter*> MetaModel::head_params() {
  auto out = params_.with_prefix("relation.");
  for (Parameter* p : params_.with_prefix("head.")) out.push_back(p);
  return out;
}

std::vector<Parameter*> MetaModel::trainable_params() {
  if (encoder_->config().trainable) return params_.all();
  return head_params();
}

std::unique_ptr<MetaModel> MetaModel::clone() const {
  auto copy = std::make_unique<MetaModel>(options_, encoder_->config(), seed_);
  copy->params_.restore(params_.snapshot());
  return copy;
}

bool supports_embedding_path(const MetaModel& model) {
  const bool maml = model.algorithm() == Algorithm::fomaml || model.algorithm() == Algorithm::protofomaml;
  return !maml || model.options().inner.scope == AdaptScope::head_only || !model.encoder().config().trainable;
}

namespace {

bool is_maml(Algorithm a) { return a == Algorithm::fomaml || a == Algorithm::protofomaml; }

void finish(EpisodeOutcome& out, const std::vector<int>& query_labels) {
  out.predicted.clear();
  int correct = 0;
  for (Index i = 0; i < out.query_probs.rows(); ++i) {
    Index best = 0;
    out.query_probs.row(i).maxCoeff(&best);
    out.predicted.push_back(static_cast<int>(best));
    if (best == query_labels[static_cast<std::size_t>(i)]) ++correct;
  }
  out.accuracy = query_labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(query_labels.size());
}

void check_episode(const EpisodeTensors& e) {
  if (e.n_way < 2) throw std::invalid_argument("episode needs at least two classes");
  if (static_cast<Index>(e.support_labels.size()) != e.support.rows ||
      static_cast<Index>(e.query_labels.size()) != e.query.rows) {
    throw std::invalid_argument("episode labels do not match its batches");
  }
  if (e.query_labels.empty()) throw std::invalid_argument("episode has no query items");
}

Mat one_hot(const std::vector<int>& labels, int n) {
  Mat t = Mat::Zero(static_cast<Index>(labels.size()), n);
  for (std::size_t i = 0; i < labels.size(); ++i) t(static_cast<Index>(i), labels[i]) = 1.0;
  return t;
}

struct Forward {
  Var loss;
  Mat probs;
};

/// Matching, prototypical and relation losses on embeddings already on the tape.
Forward metric_forward(const MetaModel& model, Tape& tape, const Var& s, const std::vector<int>& sl,
                       const Var& q, const std::vector<int>& ql, int n) {
  const ModelOptions& o = model.options();
  switch (o.algorithm) {
    case Algorithm::matching: {
      const Var lp = matching_log_probs(s, sl, n, q);
      return {nn::nll(lp, ql), lp.value().array().exp().matrix()};
    }
    case Algorithm::proto: {
      const Var protos = nn::group_reduce(s, sl, n, true);
      const Var lp = nn::log_softmax(proto_logits(protos, q, o.distance));
      return {nn::nll(lp, ql), lp.value().array().exp().matrix()};
    }
    case Algorithm::relation: {
      const Var repr = nn::group_reduce(s, sl, n, o.relation_aggregation == Aggregation::mean);
      const Var scores = relation_scores(tape, *model.relation(), repr, q);
      Mat probs = scores.value();
      for (Index i = 0; i < probs.rows(); ++i) probs.row(i) /= probs.row(i).sum();
      return {nn::mse(scores, one_hot(ql, n)), probs};
    }
    default: break;
  }
  throw std::logic_error("metric_forward: not a metric algorithm");
}

struct HeadValues {
  Mat weight;  // D x n
  Mat bias;    // 1 x n
};

HeadValues proto_head(const Mat& support, const std::vector<int>& labels, int n) {
  const HeadInit init = protomaml_init_head(proto_compute(support, labels, n));
  return {init.weight.transpose(), init.bias.transpose()};
}

double head_ce(const Mat& emb, const std::vector<int>& labels, const ParamVector& theta, ParamVector* grad) {
  Tape tape;
  Parameter w{"w", theta[0], {}};
  Parameter b{"b", theta[1], {}};
  w.zero_grad();
  b.zero_grad();
  const Var logits = nn::add_bias(nn::matmul(tape.constant(emb), tape.param(w)), tape.param(b));
  const Var loss = nn::nll(nn::log_softmax(logits), labels);
  if (grad != nullptr) {
    tape.backward(loss);
    *grad = {w.grad, b.grad};
  }
  return loss.value()(0, 0);
}

/// Head-only adaptation on fixed support embeddings.
HeadValues adapt_head(const HeadValues& init, const Mat& support, const std::vector<int>& labels,
                      const InnerLoopConfig& inner) {
  const LossAndGrad loss = [&](const ParamVector& theta, ParamVector* grad) {
    return head_ce(support, labels, theta, grad);
  };
  ParamVector adapted = inner_adapt({init.weight, init.bias}, {inner.alpha_head, inner.alpha_head},
                                    inner.steps, loss);
  return {adapted[0], adapted[1]};
}

HeadValues initial_head(const MetaModel& model, const Mat& support, const std::vector<int>& labels, int n) {
  if (model.algorithm() == Algorithm::protofomaml) return proto_head(support, labels, n);
  if (n != model.options().n_way) {
    throw std::invalid_argument("FOMAML head has " + std::to_string(model.options().n_way) +
                                " outputs but the episode has " + std::to_string(n) + " classes");
  }
  return {model.head()->weight->value, model.head()->bias->value};
}

encoder::PreparedBatch concat(const encoder::PreparedBatch& a, const encoder::PreparedBatch& b) {
  encoder::PreparedBatch out;
  out.rows = a.rows + b.rows;
  if (a.images.size() > 0 || b.images.size() > 0) {
    out.images.resize(out.rows, std::max(a.images.cols(), b.images.cols()));
    if (a.rows > 0) out.images.topRows(a.rows) = a.images;
    if (b.rows > 0) out.images.bottomRows(b.rows) = b.images;
  }
  if (a.texts.size() > 0 || b.texts.size() > 0) {
    out.texts.resize(out.rows, std::max(a.texts.cols(), b.texts.cols()));
    if (a.rows > 0) out.texts.topRows(a.rows) = a.texts;
    if (b.rows > 0) out.texts.bottomRows(b.rows) = b.texts;
  }
  return out;
}

std::vector<int> range(int from, int to) {
  std::vector<int> r;
  for (int i = from; i < to; ++i) r.push_back(i);
  return r;
}

/// Support and query embeddings from one encoder pass.
std::pair<Var, Var> embed_episode(const MetaModel& model, Tape& tape, const EpisodeTensors& e) {
  const Var all = model.encoder().forward(tape, concat(e.support, e.query));
  const int s = static_cast<int>(e.support.rows);
  const int q = static_cast<int>(e.query.rows);
  return {nn::select_rows(all, range(0, s)), nn::select_rows(all, range(s, s + q))};
}

/// Head-only (Proto)FOMAML on a tape whose embeddings may carry encoder gradients.
EpisodeOutcome maml_head_only(MetaModel* train_model, const MetaModel& model, Tape& tape, const Var& s,
                              const Var& q, const EpisodeTensors& e) {
  const HeadValues init = initial_head(model, s.value(), e.support_labels, e.n_way);
  const HeadValues adapted = adapt_head(init, s.value(), e.support_labels, model.options().inner);
  Parameter w{"w", adapted.weight, {}};
  Parameter b{"b", adapted.bias, {}};
  w.zero_grad();
  b.zero_grad();
  const Var lp = nn::log_softmax(nn::add_bias(nn::matmul(q, tape.param(w)), tape.param(b)));
  const Var loss = nn::nll(lp, e.query_labels);
  EpisodeOutcome out;
  out.loss = loss.value()(0, 0);
  out.query_probs = lp.value().array().exp().matrix();
  finish(out, e.query_labels);
  if (train_model == nullptr) return out;
  if (!std::isfinite(out.loss)) throw DivergenceError("query loss is not finite");
  tape.backward(loss);
  if (model.algorithm() == Algorithm::fomaml) {
    train_model->params().at("head.weight").grad += w.grad;
    train_model->params().at("head.bias").grad += b.grad;
  } else {
    // First-order gradient w.r.t. the prototype-initialized head, chained into the encoder.
    const Var protos = nn::group_reduce(s, e.support_labels, e.n_way, true);
    const Var w0 = nn::transpose(nn::scale(protos, 2.0));
    const Var b0 = nn::transpose(nn::scale(nn::row_sq_norm(protos), -1.0));
    tape.backward(nn::add(nn::sum_product(w0, w.grad), nn::sum_product(b0, b.grad)));
  }
  return out;
}

/// Full-parameter (Proto)FOMAML: the encoder and head are adapted, then restored.
EpisodeOutcome maml_full(MetaModel& model, const EpisodeTensors& e, bool train) {
  const InnerLoopConfig& inner = model.options().inner;
  const bool enc_trainable = model.encoder().config().trainable;
  auto enc = model.encoder_params();
  auto all = model.params().all();
  const auto saved_values = model.params().snapshot();
  std::vector<Mat> saved_grads;
  for (Parameter* p : all) saved_grads.push_back(p->grad);

  Parameter w{"w", {}, {}};
  Parameter b{"b", {}, {}};
  if (model.algorithm() == Algorithm::protofomaml) {
    Tape tape;
    nn::FrozenScope frozen(tape, true);
    const HeadValues h = proto_head(model.encoder().forward(tape, e.support).value(), e.support_labels, e.n_way);
    w.value = h.weight;
    b.value = h.bias;
  } else {
    const HeadValues h = initial_head(model, Mat(), e.support_labels, e.n_way);
    w.value = h.weight;
    b.value = h.bias;
  }

  for (int step = 0; step < inner.steps; ++step) {
    for (Parameter* p : all) p->zero_grad();
    w.zero_grad();
    b.zero_grad();
    Tape tape;
    const Var s = model.encoder().forward(tape, e.support);
    const Var loss = nn::nll(nn::log_softmax(nn::add_bias(nn::matmul(s, tape.param(w)), tape.param(b))),
                             e.support_labels);
    if (!std::isfinite(loss.value()(0, 0))) {
      model.params().restore(saved_values);
      throw DivergenceError("inner loop diverged at step " + std::to_string(step));
    }
    tape.backward(loss);
    if (enc_trainable) nn::sgd_step(enc, inner.alpha_encoder);
    w.value -= inner.alpha_head * w.grad;
    b.value -= inner.alpha_head * b.grad;
  }

  for (Parameter* p : all) p->zero_grad();
  w.zero_grad();
  b.zero_grad();
  EpisodeOutcome out;
  {
    Tape tape;
    nn::FrozenScope frozen(tape, !train);
    const Var q = model.encoder().forward(tape, e.query);
    const Var lp = nn::log_softmax(nn::add_bias(nn::matmul(q, tape.param(w)), tape.param(b)));
    const Var loss = nn::nll(lp, e.query_labels);
    out.loss = loss.value()(0, 0);
    out.query_probs = lp.value().array().exp().matrix();
    finish(out, e.query_labels);
    if (train) {
      if (!std::isfinite(out.loss)) {
        model.params().restore(saved_values);
        throw DivergenceError("query loss is not finite");
      }
      tape.backward(loss);
    }
  }
  model.params().restore(saved_values);
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i]->grad = train ? Mat(saved_grads[i] + all[i]->grad) : saved_grads[i];
  }
  if (!train) return out;
  if (model.algorithm() == Algorithm::fomaml) {
    model.params().at("head.weight").grad += w.grad;
    model.params().at("head.bias").grad += b.grad;
  } else if (enc_trainable) {
    Tape tape;
    const Var s = model.encoder().forward(tape, e.support);
    const Var protos = nn::group_reduce(s, e.support_labels, e.n_way, true);
    const Var w0 = nn::transpose(nn::scale(protos, 2.0));
    const Var b0 = nn::transpose(nn::scale(nn::row_sq_norm(protos), -1.0));
    tape.backward(nn::add(nn::sum_product(w0, w.grad), nn::sum_product(b0, b.grad)));
  }
  return out;
}

EpisodeOutcome run_episode(MetaModel& model, const EpisodeTensors& e, bool train) {
  check_episode(e);
  if (is_maml(model.algorithm()) && model.options().inner.scope == AdaptScope::full &&
      model.encoder().config().trainable) {
    return maml_full(model, e, train);
  }
  Tape tape;
  nn::FrozenScope frozen(tape, !train);
  const auto [s, q] = embed_episode(model, tape, e);
  if (is_maml(model.algorithm())) return maml_head_only(train ? &model : nullptr, model, tape, s, q, e);
  Forward f = metric_forward(model, tape, s, e.support_labels, q, e.query_labels, e.n_way);
  EpisodeOutcome out;
  out.loss = f.loss.value()(0, 0);
  out.query_probs = std::move(f.probs);
  finish(out, e.query_labels);
  if (train) {
    if (!std::isfinite(out.loss)) throw DivergenceError("episode loss is not finite");
    tape.backward(f.loss);
  }
  return out;
}

}  // namespace

EpisodeOutcome episode_loss(MetaModel& model, const EpisodeTensors& episode) {
  return run_episode(model, episode, false);
}

EpisodeOutcome episode_step(MetaModel& model, const EpisodeTensors& episode) {
  return run_episode(model, episode, true);
}

EpisodeOutcome episode_from_embeddings(const MetaModel& model, const Mat& support,
                                       const std::vector<int>& support_labels, const Mat& query,
                                       const std::vector<int>& query_labels, int n_way) {
  if (!supports_embedding_path(model)) {
    throw std::logic_error("full-scope adaptation needs encoder inputs, not embeddings");
  }
  if (support.cols() != model.dim() || query.cols() != model.dim()) {
    throw encoder::DimensionMismatch("embedding dimension " + std::to_string(support.cols()) +
                                     " does not match the encoder's " + std::to_string(model.dim()));
  }
  EpisodeTensors shape;
  shape.support.rows = support.rows();
  shape.query.rows = query.rows();
  shape.support_labels = support_labels;
  shape.query_labels = query_labels;
  shape.n_way = n_way;
  check_episode(shape);
  Tape tape;
  nn::FrozenScope frozen(tape, true);
  const Var s = tape.constant(support);
  const Var q = tape.constant(query);
  if (is_maml(model.algorithm())) return maml_head_only(nullptr, model, tape, s, q, shape);
  Forward f = metric_forward(model, tape, s, support_labels, q, query_labels, n_way);
  EpisodeOutcome out;
  out.loss = f.loss.value()(0, 0);
  out.query_probs = std::move(f.probs);
  finish(out, query_labels);
  return out;
}

}  // namespace graphgrade::meta

namespace graphgrade::meta {

GradePrediction predict_grade(MetaModel& model, const std::vector<encoder::EncoderInput>& support,
                              const std::vector<int>& support_grades, const encoder::EncoderInput& query, int m) {
  if (support.empty() || support.size() != support_grades.size()) {
    throw std::invalid_argument("support items and grades must be nonempty and of equal length");
  }
  GradePrediction out;
  out.class_grades = support_grades;
  std::sort(out.class_grades.begin(), out.class_grades.end());
  out.class_grades.erase(std::unique(out.class_grades.begin(), out.class_grades.end()), out.class_grades.end());
  if (out.class_grades.size() < 2) throw std::invalid_argument("the support set must cover at least two grades");
  EpisodeTensors t;
  t.n_way = static_cast<int>(out.class_grades.size());
  for (int g : support_grades) {
    const auto it = std::lower_bound(out.class_grades.begin(), out.class_grades.end(), g);
    t.support_labels.push_back(static_cast<int>(it - out.class_grades.begin()));
  }
  t.query_labels = {0};
  t.support = model.encoder().prepare(support);
  t.query = model.encoder().prepare({query});
  const EpisodeOutcome r = episode_loss(model, t);
  out.grade = out.class_grades[static_cast<std::size_t>(r.predicted.at(0))];
  out.criteria = decode_grade(out.grade, m);
  for (nn::Index c = 0; c < r.query_probs.cols(); ++c) out.class_probs.push_back(r.query_probs(0, c));
  return out;
}

}  // namespace graphgrade::meta
