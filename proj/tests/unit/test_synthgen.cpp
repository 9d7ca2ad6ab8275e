#include <doctest.h>

#include <random>

#include <opencv2/imgcodecs.hpp>

#include "graphgrade/episodes.hpp"
#include "graphgrade/synthgen.hpp"
#include "support.hpp"

using namespace graphgrade;
using namespace graphgrade::synth;

namespace {

double centroid_x(const std::vector<cv::Point2d>& pts) {
  double sum = 0.0;
  for (const auto& p : pts) sum += p.x;
  return sum / static_cast<double>(pts.size());
}

ShiftDirection observed_shift(const Scene& scene, const std::string& base, const std::string& shifted) {
  const auto* b = scene.find(base);
  const auto* s = scene.find(shifted);
  if (s == nullptr) return ShiftDirection::none;
  return centroid_x(s->centerline) > centroid_x(b->centerline) ? ShiftDirection::right : ShiftDirection::left;
}

// Recomputes every criterion bit from the renderer's vector geometry.
std::vector<int> bits_from_scene(const TaskSpec& spec, const Scene& scene) {
  std::vector<int> bits;
  for (const auto& t : spec.criteria_templates) {
    switch (t.kind) {
      case TemplateKind::demand_shift:
        bits.push_back(observed_shift(scene, "demand", "demand_shifted") == t.when_set ? 1 : 0);
        break;
      case TemplateKind::supply_shift:
        bits.push_back(observed_shift(scene, "supply", "supply_shifted") == t.when_set ? 1 : 0);
        break;
      case TemplateKind::axes_labeled:
        bits.push_back(scene.axis_labels_drawn ? 1 : 0);
        break;
      case TemplateKind::equilibrium_marked:
        bits.push_back(scene.equilibrium_marker ? 1 : 0);
        break;
    }
  }
  return bits;
}

TaskSpec four_criteria_task() {
  TaskSpec spec = shift_direction_task("four");
  spec.criteria_templates = {
      {TemplateKind::demand_shift, "demand right", ShiftDirection::right, ShiftDirection::left},
      {TemplateKind::supply_shift, "supply left", ShiftDirection::left, ShiftDirection::none},
      {TemplateKind::axes_labeled, "axes labeled", ShiftDirection::none, ShiftDirection::none},
      {TemplateKind::equilibrium_marked, "equilibrium marked", ShiftDirection::none, ShiftDirection::none}};
  return spec;
}

}  // namespace

TEST_CASE("shift-right submission draws the shifted curve to the right") {
  const auto spec = shift_direction_task();
  const auto out = generate_submission(spec, {1}, 7);
  CHECK(out.annotation.grade == 1);
  const auto* base = out.scene.find("demand");
  const auto* shifted = out.scene.find("demand_shifted");
  REQUIRE(base != nullptr);
  REQUIRE(shifted != nullptr);
  CHECK(centroid_x(shifted->centerline) > centroid_x(base->centerline));
  // The drawn stroke is ink on the page.
  const auto& p = shifted->stroke[shifted->stroke.size() / 2];
  const cv::Vec3b px = out.image.at<cv::Vec3b>(static_cast<int>(std::lround(p.y)), static_cast<int>(std::lround(p.x)));
  CHECK(px[0] + px[1] + px[2] < 3 * 250);
}

TEST_CASE("zero vector gives grade 0") {
  for (std::uint64_t seed : {1, 2, 3}) {
    CHECK(generate_submission(shift_direction_task(), {0}, seed).annotation.grade == 0);
  }
}

TEST_CASE("generation is deterministic per seed") {
  const auto spec = shift_and_labels_task();
  const auto a = generate_submission(spec, {1, 0}, 11);
  const auto b = generate_submission(spec, {1, 0}, 11);
  CHECK(cv::norm(a.image, b.image, cv::NORM_INF) == 0.0);
  CHECK(a.text == b.text);
  const auto c = generate_submission(spec, {1, 0}, 12);
  CHECK(cv::norm(a.image, c.image, cv::NORM_INF) > 0.0);
}

TEST_CASE("labels agree with the scene geometry on 1000 random draws") {
  const auto spec = four_criteria_task();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> bit(0, 1);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<int> v(static_cast<std::size_t>(spec.m()));
    for (auto& x : v) x = bit(rng);
    const auto out = generate_submission(spec, v, rng());
    if (bits_from_scene(spec, out.scene) != v || out.annotation.criteria_vector != v ||
        out.annotation.grade != encode_grade(v)) {
      ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("curve slopes follow their kind") {
  const auto out = generate_submission(four_criteria_task(), {1, 1, 1, 1}, 5);
  for (const auto& c : out.scene.curves) {
    const auto& a = c.centerline.front();
    const auto& b = c.centerline.back();
    // Image y grows downward, so a rising plot line has negative dy/dx in pixels.
    const double slope = -(b.y - a.y) / (b.x - a.x);
    if (c.spec.kind == CurveKind::supply) {
      CHECK(slope > 0.0);
    } else {
      CHECK(slope < 0.0);
    }
  }
}

TEST_CASE("invalid specs are rejected") {
  auto spec = shift_direction_task();
  CHECK_THROWS_AS(generate_submission(spec, {1, 0}, 1), std::invalid_argument);
  spec.criteria_templates[0].when_unset = ShiftDirection::right;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = shift_direction_task();
  spec.criteria_templates.push_back(spec.criteria_templates[0]);
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("generated dataset matches requested counts") {
  testing::TempDir dir;
  SUBCASE("balanced") {
    const auto spec = shift_direction_task("bal");
    const auto m = generate_dataset({spec}, {{"bal", {{0, 10}, {1, 10}}}}, 3, dir.path());
    const auto rows = compute_stats(m);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].count == 10);
    CHECK(rows[1].count == 10);
    CHECK(load_manifest(dir / "manifest.json") == m);
    for (const auto& s : m.modules[0].assignments[0].submissions) {
      REQUIRE(s.graph_crop.has_value());
      CHECK(std::filesystem::exists(dir / s.original_image));
      const cv::Mat crop = cv::imread((dir / *s.graph_crop).string());
      CHECK(crop.rows == 224);
      CHECK(crop.cols == 224);
    }
  }
  SUBCASE("imbalanced table shape") {
    const auto spec = shift_and_labels_task("imb");
    const auto m = generate_dataset({spec}, {{"imb", {{0, 5}, {1, 3}, {2, 1}, {3, 52}}}}, 3, dir.path(),
                                    {.extract_crops = false});
    std::vector<int> counts;
    for (const auto& r : compute_stats(m)) counts.push_back(r.count);
    CHECK(counts == std::vector<int>{5, 3, 1, 52});
  }
  SUBCASE("empty counts") {
    const auto spec = shift_direction_task("none");
    const auto m = generate_dataset({spec}, {}, 3, dir.path());
    CHECK(m.submission_count() == 0);
    const auto report = episodes::feasibility_report(m, {{2, 1, 1}, {3, 1, 1}});
    for (const auto& a : report.assignments) CHECK_FALSE(a.usable);
  }
}

TEST_CASE("dataset generation is a pure function of its inputs") {
  testing::TempDir a;
  testing::TempDir b;
  const auto spec = shift_direction_task();
  const CountsByTask counts{{"shift", {{0, 3}, {1, 3}}}};
  const auto ma = generate_dataset({spec}, counts, 9, a.path());
  const auto mb = generate_dataset({spec}, counts, 9, b.path());
  CHECK(ma == mb);
  for (const auto& s : ma.modules[0].assignments[0].submissions) {
    const cv::Mat ia = cv::imread((a / s.original_image).string());
    const cv::Mat ib = cv::imread((b / s.original_image).string());
    CHECK(cv::norm(ia, ib, cv::NORM_INF) == 0.0);
  }
}

TEST_CASE("task specs round trip through JSON") {
  const auto spec = four_criteria_task();
  const auto back = specs_from_json(to_json(spec));
  REQUIRE(back.size() == 1);
  CHECK(to_json(back[0]) == to_json(spec));
  CHECK_THROWS(specs_from_json(nlohmann::json::array({to_json(spec), to_json(spec)})));
  const auto counts = counts_from_json(nlohmann::json{{"four", {{"0", 2}, {"3", 5}}}});
  CHECK(counts.at("four").at(3) == 5);
  CHECK_THROWS(counts_from_json(nlohmann::json{{"four", {{"0", -1}}}}));
}
