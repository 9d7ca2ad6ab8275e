#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "graphgrade/report.hpp"
#include "support.hpp"

using namespace graphgrade;
using namespace graphgrade::report;

namespace {

episodes::EpisodePool pool_of(const DatasetManifest& m) {
  return episodes::EpisodePool::from_manifest(m, episodes::PoolOptions{true});
}

Predictor oracle() {
  return [](const episodes::Episode& e) {
    std::vector<int> out;
    for (const auto& q : e.query) out.push_back(q.grade);
    return out;
  };
}

Predictor random_class(std::uint64_t seed) {
  return [seed](const episodes::Episode& e) {
    std::string key;
    for (const auto& s : e.support) key += s.submission_id + "/";
    std::vector<int> out;
    for (const auto& q : e.query) {
      std::mt19937_64 rng(seed ^ std::hash<std::string>{}(key + q.submission_id));
      std::uniform_int_distribution<std::size_t> pick(0, e.class_grades.size() - 1);
      out.push_back(e.class_grades[pick(rng)]);
    }
    return out;
  };
}

EvalResult fake_result(const std::string& model, int n, int k, double mean, std::optional<double> std = 0.1) {
  EvalResult r;
  r.model = model;
  r.spec = {n, k, 1};
  r.n_episodes = 10;
  r.mean = mean;
  r.std = std;
  return r;
}

}  // namespace

TEST_CASE("accuracy counts exact grade matches") {
  CHECK(accuracy({3, 0, 1}, {3, 1, 1}) == doctest::Approx(2.0 / 3.0));
  CHECK(accuracy({1}, {1}) == 1.0);
  CHECK(accuracy({kFailedPrediction, 2}, {0, 2}) == 0.5);
  CHECK_THROWS(accuracy({}, {}));
  CHECK_THROWS(accuracy({1, 2}, {1}));
}

TEST_CASE("aggregate uses the sample standard deviation") {
  const auto a = aggregate({0.5, 1.0});
  CHECK(a.mean == doctest::Approx(0.75));
  REQUIRE(a.std.has_value());
  CHECK(*a.std == doctest::Approx(0.35355).epsilon(1e-4));
  CHECK(*a.ci95_half == doctest::Approx(1.96 * 0.353553 / std::sqrt(2.0)).epsilon(1e-4));
  CHECK(*aggregate({0.4, 0.4, 0.4}).std < 1e-12);
  const auto single = aggregate({0.7});
  CHECK(single.mean == 0.7);
  CHECK_FALSE(single.std.has_value());
  CHECK_FALSE(single.ci95_half.has_value());
  CHECK_THROWS(aggregate({}));
}

TEST_CASE("oracle predictor scores 1.0") {
  const auto m = testing::make_manifest(testing::table2_cells());
  const auto r = evaluate_predictor("oracle", pool_of(m), {2, 1, 1}, 300, 1, oracle());
  CHECK(r.mean == 1.0);
  CHECK(*r.std == 0.0);
  CHECK(r.failures == 0);
  for (double c : r.per_criterion_accuracy) CHECK(c == 1.0);
}

TEST_CASE("random predictor sits at chance") {
  const auto m = testing::make_manifest(testing::table2_cells());
  const auto r3 = evaluate_predictor("random", pool_of(m), {3, 1, 1}, 700, 2, random_class(5));
  CHECK(r3.n_episodes * 3 >= 2000);
  CHECK(std::abs(r3.mean - 1.0 / 3.0) <= 0.03);
  const auto r2 = evaluate_predictor("random", pool_of(m), {2, 1, 1}, 1000, 2, random_class(5));
  CHECK(std::abs(r2.mean - 0.5) <= 0.03);
}

TEST_CASE("same seed gives identical results") {
  const auto m = testing::make_manifest(testing::table2_cells());
  const auto a = evaluate_predictor("random", pool_of(m), {2, 2, 1}, 200, 9, random_class(1));
  const auto b = evaluate_predictor("random", pool_of(m), {2, 2, 1}, 200, 9, random_class(1), 4);
  CHECK(a == b);
  const auto c = evaluate_predictor("random", pool_of(m), {2, 2, 1}, 200, 10, random_class(1));
  CHECK(c.accuracies() != a.accuracies());
}

TEST_CASE("assignment breakdown rolls up to the overall mean") {
  const auto m = testing::make_manifest(testing::table2_cells());
  const auto r = evaluate_predictor("random", pool_of(m), {2, 1, 1}, 500, 4, random_class(2));
  const auto b = breakdown_by_assignment({r});
  double weighted = 0.0;
  int total = 0;
  for (const auto& c : b.cells) {
    weighted += c.mean * c.episodes;
    total += c.episodes;
  }
  CHECK(total == 500);
  CHECK(weighted / total == doctest::Approx(r.mean).epsilon(1e-12));
  CHECK(b.find("random", "VWL8", "1", 2, 1) != nullptr);
  CHECK(b.find("random", "VWL8", "1", 3, 1) == nullptr);
}

TEST_CASE("single assignment breakdown equals the overall result") {
  const auto m = testing::make_manifest({{"M", "1", 2, {{0, 10}, {1, 10}, {2, 10}}}});
  const auto r = evaluate_predictor("random", pool_of(m), {3, 2, 1}, 50, 4, random_class(3));
  const auto b = breakdown_by_assignment({r});
  REQUIRE(b.cells.size() == 1);
  CHECK(b.cells[0].mean == doctest::Approx(r.mean));
  CHECK(b.cells[0].episodes == 50);
}

TEST_CASE("exact match never exceeds any per-criterion accuracy") {
  const auto m = testing::make_manifest({{"M", "1", 2, {{0, 12}, {1, 12}, {2, 12}, {3, 12}}}});
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = evaluate_predictor("random", pool_of(m), {3, 1, 2}, 60, seed, random_class(seed));
    REQUIRE(r.per_criterion_accuracy.size() == 2);
    for (double c : r.per_criterion_accuracy) CHECK(r.mean <= c + 1e-12);
  }
}

TEST_CASE("failed predictions are counted as incorrect") {
  const auto m = testing::make_manifest({{"M", "1", 1, {{0, 10}, {1, 10}}}});
  const Predictor fails = [](const episodes::Episode& e) { return std::vector<int>(e.query.size(), kFailedPrediction); };
  const auto r = evaluate_predictor("vllm:mock", pool_of(m), {2, 1, 1}, 10, 1, fails);
  CHECK(r.mean == 0.0);
  CHECK(r.failures == 20);
  CHECK(r.per_criterion_accuracy == std::vector<double>{0.0});
}

TEST_CASE("aborted evaluation keeps completed episodes") {
  const auto m = testing::make_manifest({{"M", "1", 1, {{0, 10}, {1, 10}}}});
  int calls = 0;
  const Predictor flaky = [&](const episodes::Episode& e) {
    if (++calls == 6) throw std::runtime_error("provider went away");
    return oracle()(e);
  };
  try {
    evaluate_predictor("x", pool_of(m), {2, 1, 1}, 20, 1, flaky);
    FAIL("expected EvaluationAborted");
  } catch (const EvaluationAborted& e) {
    CHECK(std::string(e.what()) == "provider went away");
    CHECK(e.partial().n_episodes == 5);
    CHECK(e.partial().mean == 1.0);
  }
}

TEST_CASE("evaluation input errors") {
  const auto m = testing::make_manifest({{"M", "1", 1, {{0, 3}, {1, 3}}}});
  CHECK_THROWS_AS(evaluate_predictor("x", pool_of(m), {2, 5, 1}, 5, 1, oracle()), episodes::NoFeasibleAssignment);
  CHECK_THROWS(evaluate_predictor("x", pool_of(m), {2, 1, 1}, 0, 1, oracle()));
  const Predictor short_reply = [](const episodes::Episode&) { return std::vector<int>{0}; };
  CHECK_THROWS_AS(evaluate_predictor("x", pool_of(m), {2, 1, 1}, 3, 1, short_reply), EvaluationAborted);
}

TEST_CASE("results CSV round trips") {
  testing::TempDir dir;
  const std::vector<ResultsRow> rows = {{"proto", 2, 4, 200, 87.25, 11.5, 0},
                                        {"vllm:model, quoted", 3, 1, 50, 40.0, std::nullopt, 3}};
  write_results_csv(rows, dir / "r.csv");
  CHECK(is_results_csv(dir / "r.csv"));
  CHECK(read_results_csv(dir / "r.csv") == rows);
  std::ofstream(dir / "other.csv") << "a,b\n1,2\n";
  CHECK_FALSE(is_results_csv(dir / "other.csv"));
  CHECK_THROWS(read_results_csv(dir / "other.csv"));
  CHECK_FALSE(is_results_csv(dir / "missing.csv"));
}

TEST_CASE("rows round percentages to two decimals") {
  auto r = fake_result("proto", 2, 1, 0.123456, 0.0398765);
  const auto row = to_row(r);
  CHECK(row.mean_pct == 12.35);
  CHECK(*row.std_pct == 3.99);
  CHECK_FALSE(to_row(fake_result("p", 2, 1, 0.5, std::nullopt)).std_pct.has_value());
}

TEST_CASE("one chart per way and shot") {
  testing::TempDir dir;
  std::vector<EvalResult> results;
  for (int n : {2, 3}) {
    for (int k : {1, 2, 4}) {
      results.push_back(fake_result("proto", n, k, 0.7));
      results.push_back(fake_result("maml", n, k, 0.6));
      results.push_back(fake_result("vllm:model", n, k, 0.5));
    }
  }
  results.back().modality = "graph_only";
  const auto written = emit_report(results, dir.path(), {Format::csv, Format::json, Format::png});
  int charts = 0;
  for (const auto& p : written) {
    CHECK(std::filesystem::exists(p));
    if (p.extension() == ".png") {
      ++charts;
      CHECK_FALSE(cv::imread(p.string()).empty());
    }
  }
  CHECK(charts == 6);
  for (int n : {2, 3}) {
    for (int k : {1, 2, 4}) {
      CHECK(std::filesystem::exists(dir / ("compare_" + std::to_string(n) + "way_" + std::to_string(k) + "shot.png")));
    }
  }
  CHECK(read_results_csv(dir / "results.csv").size() == 18);
  CHECK(std::filesystem::exists(dir / "results_ablation.csv"));
  const auto doc = nlohmann::json::parse(std::ifstream(dir / "results.json"));
  CHECK(doc["results"].size() == 18);
  CHECK(doc["results"][0].contains("ci95_half_width"));
}

TEST_CASE("report argument errors") {
  testing::TempDir dir;
  CHECK_THROWS_AS(emit_report({fake_result("p", 2, 1, 0.5)}, dir.path(), {}), std::invalid_argument);
  CHECK_THROWS_AS(emit_report({}, dir.path(), {Format::csv}), std::invalid_argument);
  CHECK(format_from_string("png") == Format::png);
  CHECK_THROWS(format_from_string("pdf"));
  CHECK(is_vllm_model("vllm:x"));
  CHECK_FALSE(is_vllm_model("proto"));
}

TEST_CASE("checkpoint evaluation uses the held-out pool") {
  testing::TempDir dir;
  const auto manifest = testing::make_shift_dataset(dir.path(), 12, 8);
  meta::TrainConfig config;
  config.model.algorithm = meta::Algorithm::proto;
  config.spec = {2, 2, 1};
  config.outer.epochs = 1;
  config.outer.episodes_per_epoch = 2;
  config.split.min_cell_for_split = 5;
  config.split.eval_fraction = 0.5;
  const auto ckpt = meta::meta_train(config, manifest, dir.path());
  const auto r = evaluate_checkpoint(ckpt, manifest, dir.path(), {2, 2, 1}, 20, 3);
  CHECK(r.n_episodes == 20);
  CHECK(r.model == "proto");
  CHECK(r.split_mode == "disjoint");
  CHECK(r.modality == "both");
  const auto eval_pool = checkpoint_split(ckpt, manifest).eval;
  std::set<std::string> eval_ids;
  for (const auto& a : eval_pool.assignments()) {
    for (const auto& [g, members] : a.by_grade) eval_ids.insert(members.begin(), members.end());
  }
  const auto train_pool = checkpoint_split(ckpt, manifest).train;
  for (const auto& a : train_pool.assignments()) {
    for (const auto& [g, members] : a.by_grade) {
      for (const auto& id : members) CHECK(eval_ids.count(id) == 0);
    }
  }
  CHECK(evaluate_checkpoint(ckpt, manifest, dir.path(), {2, 2, 1}, 20, 3, 3) == r);
}
