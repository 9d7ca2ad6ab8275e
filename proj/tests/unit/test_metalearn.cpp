#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "graphgrade/metalearn.hpp"
#include "support.hpp"

using namespace graphgrade;
using namespace graphgrade::meta;
using nn::Index;
using nn::Mat;

namespace {

Mat rows(std::initializer_list<std::initializer_list<double>> values) {
  Mat m(static_cast<Index>(values.size()), static_cast<Index>(values.begin()->size()));
  Index r = 0;
  for (const auto& row : values) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

Eigen::RowVectorXd vec(std::initializer_list<double> values) {
  Eigen::RowVectorXd v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

Mat random_mat(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& x) {
  const Eigen::VectorXd e = (x.array() - x.maxCoeff()).exp();
  return e / e.sum();
}

// Scalar quadratic losses of the form (theta - target)^2.
LossAndGrad quadratic(double target) {
  return [target](const ParamVector& theta, ParamVector* grad) {
    const double t = theta[0](0, 0);
    if (grad) *grad = {Mat::Constant(1, 1, 2.0 * (t - target))};
    return (t - target) * (t - target);
  };
}

ParamVector scalar(double v) { return {Mat::Constant(1, 1, v)}; }

struct ShiftFixture {
  testing::TempDir dir;
  DatasetManifest manifest;
  ShiftFixture(int per_grade = 10) { manifest = testing::make_shift_dataset(dir.path(), per_grade, 31); }
};

ModelOptions options_for(Algorithm a, int n_way = 2) {
  ModelOptions o;
  o.algorithm = a;
  o.n_way = n_way;
  o.relation_hidden = 16;
  o.inner.steps = 3;
  return o;
}

void copy_shared_params(const MetaModel& from, MetaModel& to) {
  for (auto* p : to.params().all()) {
    if (from.params().contains(p->name)) p->value = from.params().at(p->name).value;
  }
}

}  // namespace

TEST_CASE("matching attention on the hand-computed case") {
  const Mat support = rows({{1, 0}, {0, 1}});
  const auto alpha = matching_attention(support, vec({1, 0}));
  CHECK(alpha(0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
  CHECK(alpha(0) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(alpha.sum() == doctest::Approx(1.0));
  const auto p = matching_predict(support, {0, 1}, 2, vec({1, 0}));
  CHECK(p(0) == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("matching with identical supports follows class frequency") {
  const Mat support = rows({{0.3, 0.2}, {0.3, 0.2}, {0.3, 0.2}});
  const auto alpha = matching_attention(support, vec({5, -1}));
  for (Index i = 0; i < 3; ++i) CHECK(alpha(i) == doctest::Approx(1.0 / 3));
  const auto p = matching_predict(support, {0, 1, 1}, 2, vec({5, -1}));
  CHECK(p(0) == doctest::Approx(1.0 / 3));
  CHECK(p(1) == doctest::Approx(2.0 / 3));
  CHECK_THROWS(matching_predict(rows({{1, 2}}), {1}, 2, vec({0, 0})));
  CHECK_THROWS_AS(matching_predict(support, {0, 1, 1}, 2, vec({1, 2, 3})), encoder::DimensionMismatch);
}

TEST_CASE("prototypes are class means") {
  const Mat support = rows({{0, 0}, {7, 7}, {2, 4}});
  const Mat c = proto_compute(support, {0, 1, 0}, 2);
  CHECK((c.row(0) - vec({1, 2})).norm() < 1e-12);
  CHECK((c.row(1) - vec({7, 7})).norm() < 1e-12);
  const Mat permuted = proto_compute(rows({{2, 4}, {7, 7}, {0, 0}}), {0, 1, 0}, 2);
  CHECK((permuted - c).norm() < 1e-12);
  CHECK_THROWS(proto_compute(support, {0, 0, 0}, 2));
}

TEST_CASE("prototypical prediction on the hand-computed case") {
  const Mat protos = rows({{0, 0}, {4, 0}});
  const auto p = proto_predict(protos, vec({1, 0}), DistanceMode::euclidean);
  CHECK(p(0) == doctest::Approx(std::exp(-1.0) / (std::exp(-1.0) + std::exp(-3.0))).epsilon(1e-7));
  CHECK(p(0) == doctest::Approx(0.8808).epsilon(1e-4));
  const auto sym = proto_predict(protos, vec({2, 5}), DistanceMode::euclidean);
  CHECK(sym(0) == doctest::Approx(0.5));
  const auto near = proto_predict(rows({{0, 0}, {50, 0}}), vec({0, 0}), DistanceMode::squared_euclidean);
  CHECK(near(0) > 0.999999);
  // Squared mode: softmax of -(1, 9).
  const auto sq = proto_predict(protos, vec({1, 0}), DistanceMode::squared_euclidean);
  CHECK(sq(0) == doctest::Approx(1.0 / (1.0 + std::exp(-8.0))).epsilon(1e-12));
}

TEST_CASE("distributions sum to one and are permutation invariant") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    const Mat s = random_mat(6, 5, rng);
    const std::vector<int> labels{0, 1, 2, 0, 1, 2};
    const Eigen::RowVectorXd q = random_mat(1, 5, rng).row(0);
    const auto pm = matching_predict(s, labels, 3, q);
    const auto pp = proto_predict(proto_compute(s, labels, 3), q, DistanceMode::euclidean);
    CHECK(std::abs(pm.sum() - 1.0) < 1e-6);
    CHECK(std::abs(pp.sum() - 1.0) < 1e-6);

    const std::vector<int> order{3, 5, 1, 0, 4, 2};
    Mat sp(6, 5);
    std::vector<int> lp;
    for (int i = 0; i < 6; ++i) {
      sp.row(i) = s.row(order[static_cast<std::size_t>(i)]);
      lp.push_back(labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    }
    CHECK((matching_predict(sp, lp, 3, q) - pm).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((proto_predict(proto_compute(sp, lp, 3), q, DistanceMode::euclidean) - pp).cwiseAbs().maxCoeff() < 1e-6);

    // Relabeling classes permutes the output the same way.
    const std::vector<int> relabel{2, 0, 1};
    std::vector<int> lr;
    for (int l : labels) lr.push_back(relabel[static_cast<std::size_t>(l)]);
    const auto pr = matching_predict(s, lr, 3, q);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(pr(relabel[static_cast<std::size_t>(k)]) - pm(k)) < 1e-12);
  }
}

TEST_CASE("relation scores and class representations") {
  std::mt19937_64 rng(9);
  nn::ParamStore store;
  const RelationModule f = RelationModule::create(store, 2, 8, rng);
  const Mat support = rows({{0, 0}, {2, 2}, {5, -1}});
  CHECK((relation_class_repr(support, {0, 0, 1}, 2, Aggregation::mean).row(0) - vec({1, 1})).norm() < 1e-12);
  CHECK((relation_class_repr(support, {0, 0, 1}, 2, Aggregation::sum).row(0) - vec({2, 2})).norm() < 1e-12);
  for (int t = 0; t < 100; ++t) {
    const auto r = relation_predict(support, {0, 0, 1}, 2, random_mat(1, 2, rng).row(0) * 100.0, f, Aggregation::mean);
    CHECK(r.minCoeff() > 0.0);
    CHECK(r.maxCoeff() < 1.0);
  }
  nn::Tape tape;
  CHECK(nn::mse(tape.constant(rows({{1, 0}})), rows({{1, 0}})).value()(0, 0) == 0.0);
}

TEST_CASE("inner adaptation on a scalar model") {
  CHECK(inner_adapt(scalar(1.0), {0.1}, 1, quadratic(0.0))[0](0, 0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(inner_adapt(scalar(1.0), {0.0}, 5, quadratic(0.0))[0](0, 0) == 1.0);
  CHECK(inner_adapt(scalar(1.0), {0.1}, 0, quadratic(0.0))[0](0, 0) == 1.0);
  CHECK_THROWS_AS(inner_adapt(scalar(1.0), {10.0}, 400, quadratic(0.0)), DivergenceError);
  CHECK_THROWS(inner_adapt(scalar(1.0), {0.1, 0.2}, 1, quadratic(0.0)));
}

TEST_CASE("inner adaptation lowers the support loss of a separable episode") {
  std::mt19937_64 rng(3);
  const Mat emb = rows({{2, 0.1}, {1.5, -0.2}, {-2, 0.3}, {-1.7, 0}});
  const std::vector<int> labels{0, 0, 1, 1};
  const LossAndGrad loss = [&](const ParamVector& theta, ParamVector* grad) {
    nn::Tape tape;
    nn::Parameter w{"w", theta[0], {}};
    nn::Parameter b{"b", theta[1], {}};
    w.zero_grad();
    b.zero_grad();
    const auto l = nn::nll(nn::log_softmax(nn::add_bias(nn::matmul(tape.constant(emb), tape.param(w)), tape.param(b))), labels);
    if (grad) {
      tape.backward(l);
      *grad = {w.grad, b.grad};
    }
    return l.value()(0, 0);
  };
  const ParamVector theta{random_mat(2, 2, rng), Mat::Zero(1, 2)};
  const ParamVector adapted = inner_adapt(theta, {0.01, 0.01}, 100, loss);
  CHECK(loss(adapted, nullptr) < loss(theta, nullptr));
  CHECK(theta[0] != adapted[0]);
}

TEST_CASE("first-order outer step on a scalar model") {
  const FomamlTask task{quadratic(0.0), quadratic(2.0)};
  const auto updated = fomaml_outer_step(scalar(1.0), {task}, {0.1}, 1, 0.1);
  CHECK(std::abs(updated[0](0, 0) - 1.24) < 1e-10);
  CHECK(fomaml_outer_step(scalar(1.0), {task}, {0.1}, 1, 0.0)[0](0, 0) == 1.0);
  const auto twice = fomaml_outer_step(scalar(1.0), {task, task}, {0.1}, 1, 0.05);
  CHECK(std::abs(twice[0](0, 0) - updated[0](0, 0)) < 1e-15);
  CHECK_THROWS(fomaml_outer_step(scalar(1.0), {}, {0.1}, 1, 0.1));
}

TEST_CASE("prototype head initialization") {
  const auto h = protomaml_init_head(rows({{1, 2}}));
  CHECK(h.weight(0, 0) == 2.0);
  CHECK(h.weight(0, 1) == 4.0);
  CHECK(h.bias(0) == -5.0);
  const auto z = protomaml_init_head(rows({{0, 0}}));
  CHECK(z.weight.isZero(0.0));
  CHECK(z.bias(0) == 0.0);
}

TEST_CASE("prototype head logits rank like prototypical distances") {
  std::mt19937_64 rng(12);
  int disagreements = 0;
  double worst = 0.0;
  for (int e = 0; e < 500; ++e) {
    const int n = 2 + e % 2;
    const Mat support = random_mat(n * 3, 8, rng);
    std::vector<int> labels;
    for (int i = 0; i < n * 3; ++i) labels.push_back(i % n);
    const Mat protos = proto_compute(support, labels, n);
    const HeadInit head = protomaml_init_head(protos);
    const Eigen::RowVectorXd q = random_mat(1, 8, rng).row(0);
    const Eigen::VectorXd head_p = softmax(head.weight * q.transpose() + head.bias);
    const Eigen::VectorXd proto_sq = proto_predict(protos, q, DistanceMode::squared_euclidean);
    const Eigen::VectorXd proto_eu = proto_predict(protos, q, DistanceMode::euclidean);
    Index a = 0, b = 0, c = 0;
    head_p.maxCoeff(&a);
    proto_sq.maxCoeff(&b);
    proto_eu.maxCoeff(&c);
    if (a != b || a != c) ++disagreements;
    worst = std::max(worst, (head_p - proto_sq).cwiseAbs().maxCoeff());
  }
  CHECK(disagreements == 0);
  CHECK(worst < 1e-5);
}

TEST_CASE("uniform predictions cost ln 2") {
  nn::Tape tape;
  const auto s = tape.constant(rows({{1, 1}, {1, 1}}));
  const auto q = tape.constant(rows({{0.5, 0.5}}));
  CHECK(nn::nll(matching_log_probs(s, {0, 1}, 2, q), {0}).value()(0, 0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("algorithm option parsing") {
  for (auto a : all_algorithms()) CHECK(algorithm_from_string(to_string(a)) == a);
  CHECK(all_algorithms().size() == 5);
  CHECK_THROWS(algorithm_from_string("maml2"));
  ModelOptions o = options_for(Algorithm::relation);
  o.relation_aggregation = Aggregation::sum;
  o.distance = DistanceMode::squared_euclidean;
  o.inner.scope = AdaptScope::head_only;
  const auto back = model_options_from_json(to_json(o));
  CHECK(back.relation_aggregation == Aggregation::sum);
  CHECK(back.distance == DistanceMode::squared_euclidean);
  CHECK(back.inner.scope == AdaptScope::head_only);
  CHECK(back.relation_hidden == 16);
}

TEST_CASE("every algorithm yields a finite episode loss and a normalized distribution") {
  ShiftFixture fx;
  for (auto a : all_algorithms()) {
    CAPTURE(to_string(a));
    MetaModel model(options_for(a), encoder::EncoderConfig::desk(), 5);
    const auto features = FeatureStore::load(fx.manifest, fx.dir.path(), model.encoder());
    const auto pool = episodes::EpisodePool::from_manifest(fx.manifest, pool_options_for(model.encoder().config()));
    const auto ep = episodes::sample_indexed(pool, {2, 2, 2}, 1, 0);
    const auto t = features.tensors(ep, model.encoder());
    const auto before = model.params().snapshot();
    const auto out = episode_loss(model, t);
    CHECK(std::isfinite(out.loss));
    CHECK(out.query_probs.rows() == 4);
    for (Index i = 0; i < out.query_probs.rows(); ++i) CHECK(std::abs(out.query_probs.row(i).sum() - 1.0) < 1e-6);
    const auto after = model.params().snapshot();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);

    model.params().zero_grad();
    const auto step = episode_step(model, t);
    CHECK(step.loss == doctest::Approx(out.loss).epsilon(1e-9));
    double grad_norm = 0.0;
    for (auto* p : model.trainable_params()) grad_norm += p->grad.squaredNorm();
    CHECK(grad_norm > 0.0);
  }
}

TEST_CASE("embedding path agrees with the full forward pass") {
  ShiftFixture fx;
  for (auto a : {Algorithm::matching, Algorithm::proto, Algorithm::relation}) {
    MetaModel model(options_for(a), encoder::EncoderConfig::desk(), 5);
    REQUIRE(supports_embedding_path(model));
    const auto features = FeatureStore::load(fx.manifest, fx.dir.path(), model.encoder());
    const auto cache = EmbeddingCache::build(features, model, features.ids());
    const auto pool = episodes::EpisodePool::from_manifest(fx.manifest, pool_options_for(model.encoder().config()));
    for (std::uint64_t i = 0; i < 5; ++i) {
      const auto ep = episodes::sample_indexed(pool, {2, 3, 1}, 2, i);
      const auto full = episode_loss(model, features.tensors(ep, model.encoder()));
      std::vector<int> sl;
      std::vector<int> ql;
      for (const auto& it : ep.support) sl.push_back(it.label);
      for (const auto& it : ep.query) ql.push_back(it.label);
      const auto fast = episode_from_embeddings(model, cache.rows(ep.support), sl, cache.rows(ep.query), ql, 2);
      CHECK((full.query_probs - fast.query_probs).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  MetaModel maml(options_for(Algorithm::fomaml), encoder::EncoderConfig::desk(), 5);
  CHECK_FALSE(supports_embedding_path(maml));
}

TEST_CASE("ProtoFOMAML without inner steps matches the prototypical network") {
  ShiftFixture fx;
  ModelOptions po = options_for(Algorithm::proto);
  po.distance = DistanceMode::squared_euclidean;
  ModelOptions pm = options_for(Algorithm::protofomaml);
  pm.inner.steps = 0;
  MetaModel proto(po, encoder::EncoderConfig::desk(), 8);
  MetaModel protomaml(pm, encoder::EncoderConfig::desk(), 8);
  copy_shared_params(proto, protomaml);
  const auto features = FeatureStore::load(fx.manifest, fx.dir.path(), proto.encoder());
  const auto pool = episodes::EpisodePool::from_manifest(fx.manifest, pool_options_for(proto.encoder().config()));
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto ep = episodes::sample_indexed(pool, {2, 2, 2}, 3, i);
    const auto a = episode_loss(proto, features.tensors(ep, proto.encoder()));
    const auto b = episode_loss(protomaml, features.tensors(ep, protomaml.encoder()));
    CHECK(a.predicted == b.predicted);
    CHECK((a.query_probs - b.query_probs).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("FOMAML head size must equal the episode width") {
  ShiftFixture fx;
  MetaModel model(options_for(Algorithm::fomaml, 3), encoder::EncoderConfig::desk(), 5);
  const auto features = FeatureStore::load(fx.manifest, fx.dir.path(), model.encoder());
  const auto pool = episodes::EpisodePool::from_manifest(fx.manifest, pool_options_for(model.encoder().config()));
  const auto ep = episodes::sample_indexed(pool, {2, 1, 1}, 1, 0);
  CHECK_THROWS_AS(episode_loss(model, features.tensors(ep, model.encoder())), std::invalid_argument);
  CHECK(model.head()->weight->value.cols() == 3);
}

TEST_CASE("checkpoints reproduce predictions bit for bit") {
  ShiftFixture fx;
  testing::TempDir out;
  for (auto a : all_algorithms()) {
    CAPTURE(to_string(a));
    TrainConfig config;
    config.model = options_for(a);
    config.spec = {2, 2, 1};
    config.outer.epochs = 1;
    config.outer.episodes_per_epoch = 3;
    config.outer.beta = 1e-3;
    config.seed = 4;
    const Checkpoint ckpt = meta_train(config, fx.manifest, fx.dir.path());
    save_checkpoint(ckpt, out.path());
    const Checkpoint back = load_checkpoint(out.path());
    CHECK(back.record.curve == ckpt.record.curve);
    CHECK(back.record.seed == 4);
    CHECK(back.model->algorithm() == a);
    const auto features = FeatureStore::load(fx.manifest, fx.dir.path(), ckpt.model->encoder());
    const auto pool = episodes::EpisodePool::from_manifest(fx.manifest, pool_options_for(ckpt.model->encoder().config()));
    const auto ep = episodes::sample_indexed(pool, {2, 2, 1}, 9, 0);
    const auto x = episode_loss(*ckpt.model, features.tensors(ep, ckpt.model->encoder()));
    const auto y = episode_loss(*back.model, features.tensors(ep, back.model->encoder()));
    CHECK(x.query_probs == y.query_probs);
  }
}

TEST_CASE("zero epochs leave the initialization untouched") {
  ShiftFixture fx;
  TrainConfig config;
  config.outer.epochs = 0;
  config.outer.episodes_per_epoch = 2;
  config.seed = 13;
  config.spec = {2, 1, 1};
  const Checkpoint ckpt = meta_train(config, fx.manifest, fx.dir.path());
  MetaModel fresh(ckpt.model->options(), encoder::EncoderConfig::desk(), 13);
  const auto a = ckpt.model->params().snapshot();
  const auto b = fresh.params().snapshot();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK(ckpt.record.epochs_completed == 0);
  CHECK(ckpt.record.curve.size() == 1);
}

TEST_CASE("training is deterministic and learns the separable task") {
  ShiftFixture fx(16);
  TrainConfig config;
  config.spec = {2, 4, 1};
  config.outer.epochs = 6;
  config.outer.episodes_per_epoch = 20;
  config.outer.beta = 1e-3;
  config.seed = 21;
  const Checkpoint a = meta_train(config, fx.manifest, fx.dir.path());
  const Checkpoint b = meta_train(config, fx.manifest, fx.dir.path());
  CHECK(a.record.curve == b.record.curve);
  REQUIRE(a.record.curve.size() == 7);
  CHECK(a.record.curve.back().mean_accuracy >= a.record.curve.front().mean_accuracy);
  CHECK(a.record.curve.back().mean_accuracy >= 0.9);
  CHECK(a.record.curve.back().mean_loss < a.record.curve.front().mean_loss);
}

TEST_CASE("single-submission grading decodes the predicted grade") {
  ShiftFixture fx;
  MetaModel model(options_for(Algorithm::proto), encoder::EncoderConfig::desk(), 2);
  const auto& assignment = fx.manifest.modules[0].assignments[0];
  std::vector<encoder::EncoderInput> support;
  std::vector<int> grades;
  std::optional<encoder::EncoderInput> query;
  for (const auto& s : assignment.submissions) {
    encoder::EncoderInput in{GraphImage(load_image(fx.dir / *s.graph_crop)), s.extracted_text};
    const int g = assignment.annotation_for(s.id)->grade;
    if (!query && g == 1) {
      query = in;
      continue;
    }
    if (std::count(grades.begin(), grades.end(), g) < 4) {
      support.push_back(in);
      grades.push_back(g);
    }
  }
  REQUIRE(query.has_value());
  const auto p = predict_grade(model, support, grades, *query, 1);
  CHECK(p.class_grades == std::vector<int>{0, 1});
  CHECK(p.criteria == decode_grade(p.grade, 1));
  CHECK(p.class_probs.size() == 2);
  CHECK(std::abs(p.class_probs[0] + p.class_probs[1] - 1.0) < 1e-9);
  CHECK_THROWS(predict_grade(model, {support[0]}, {grades[0]}, *query, 1));
}
