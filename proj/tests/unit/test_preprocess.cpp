#include <doctest.h>

#include <algorithm>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "graphgrade/preprocess.hpp"
#include "support.hpp"

using namespace graphgrade;

namespace {

cv::Mat canvas(int w = 640, int h = 480) { return cv::Mat(h, w, CV_8UC3, cv::Scalar::all(255)); }

void draw_box(cv::Mat& img, int x, int y, int w, int h) {
  cv::rectangle(img, cv::Point(x, y), cv::Point(x + w - 1, y + h - 1), cv::Scalar::all(0), 2);
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w);
  const int y1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(0, x1 - x0) * std::max(0, y1 - y0);
  return inter / (a.area() + b.area() - inter);
}

GraphImage curve_fixture() {
  cv::Mat img(kGraphSize, kGraphSize, CV_8UC3, cv::Scalar::all(255));
  cv::line(img, {20, 200}, {200, 30}, cv::Scalar::all(0), 3);
  return GraphImage(img);
}

}  // namespace

TEST_CASE("region detector finds a drawn box among text lines") {
  cv::Mat img = canvas();
  draw_box(img, 50, 60, 300, 280);
  cv::putText(img, "Preis", {400, 100}, cv::FONT_HERSHEY_SIMPLEX, 0.8, cv::Scalar::all(0), 2);
  cv::putText(img, "Menge", {400, 200}, cv::FONT_HERSHEY_SIMPLEX, 0.8, cv::Scalar::all(0), 2);
  cv::putText(img, "Angebot", {400, 300}, cv::FONT_HERSHEY_SIMPLEX, 0.8, cv::Scalar::all(0), 2);
  const auto found = extract_graph_region(img);
  REQUIRE(found.has_value());
  CHECK(iou(found->box, {50, 60, 300, 280}) >= 0.9);
  CHECK(found->score > 0.0);
}

TEST_CASE("blank image yields no graph") {
  CHECK_FALSE(extract_graph_region(canvas()).has_value());
}

TEST_CASE("small image is rejected") {
  CHECK_THROWS_AS(extract_graph_region(canvas(50, 200)), std::invalid_argument);
}

TEST_CASE("largest box wins over a legend box") {
  cv::Mat img = canvas(800, 600);
  draw_box(img, 40, 40, 400, 380);
  draw_box(img, 600, 60, 80, 70);
  const auto found = extract_graph_region(img);
  REQUIRE(found.has_value());
  CHECK(iou(found->box, {40, 40, 400, 380}) >= 0.9);
}

TEST_CASE("region detection is translation consistent") {
  for (const auto& [dx, dy] : std::vector<std::pair<int, int>>{{0, 0}, {17, 9}, {-20, 31}, {55, -12}}) {
    cv::Mat img = canvas();
    draw_box(img, 100 + dx, 80 + dy, 300, 280);
    const auto found = extract_graph_region(img);
    REQUIRE(found.has_value());
    CHECK(std::abs(found->box.x - (100 + dx)) <= 2);
    CHECK(std::abs(found->box.y - (80 + dy)) <= 2);
  }
}

TEST_CASE("verify_region applies the verifier and clamps") {
  const cv::Mat img = canvas();
  const BoundingBox proposed{50, 60, 300, 280};

  const auto same = verify_region(img, proposed, auto_accept_verifier());
  CHECK(same.box == proposed);
  CHECK_FALSE(same.clamped);

  const auto moved = verify_region(img, proposed, [](const cv::Mat&, const BoundingBox& b) {
    return BoundingBox{b.x + 10, b.y + 5, b.w, b.h};
  });
  CHECK(moved.box == BoundingBox{60, 65, 300, 280});

  const auto wide = verify_region(img, proposed, [](const cv::Mat&, const BoundingBox& b) {
    return BoundingBox{b.x, b.y, 1000, b.h};
  });
  CHECK(wide.clamped);
  CHECK(wide.box.x + wide.box.w == img.cols);

  CHECK_THROWS(verify_region(img, proposed, [](const cv::Mat&, const BoundingBox&) {
    return BoundingBox{2000, 2000, 10, 10};
  }));
}

TEST_CASE("crop_resize always yields 224x224") {
  cv::Mat img = canvas(800, 900);
  cv::randu(img, cv::Scalar::all(0), cv::Scalar::all(255));

  const auto a = crop_resize(img, {50, 60, 300, 280});
  CHECK(a.graph.pixels().rows == 224);
  CHECK(a.graph.pixels().cols == 224);
  CHECK(a.graph.pixels().type() == CV_8UC3);
  CHECK_FALSE(a.extreme_aspect);

  const auto b = crop_resize(img, {10, 20, 224, 224});
  CHECK(cv::norm(b.graph.pixels(), img(cv::Rect(10, 20, 224, 224)), cv::NORM_INF) == 0.0);

  const auto c = crop_resize(img, {5, 5, 10, 800});
  CHECK(c.extreme_aspect);
  CHECK(c.graph.pixels().rows == 224);

  CHECK_THROWS_AS(crop_resize(img, {900, 900, 10, 10}), std::invalid_argument);
}

TEST_CASE("GraphImage rejects wrong shapes") {
  CHECK_THROWS_AS(GraphImage(cv::Mat(100, 224, CV_8UC3)), std::invalid_argument);
  CHECK_THROWS_AS(GraphImage(cv::Mat(224, 224, CV_8UC1)), std::invalid_argument);
}

TEST_CASE("stub text extractor returns stored text") {
  StoredTextExtractor stub("Angebot, Nachfrage");
  CHECK(extract_text(canvas(), stub) == "Angebot, Nachfrage");
  StoredTextExtractor empty;
  CHECK(extract_text(canvas(), empty) == "");
}

TEST_CASE("failing engine degrades to empty text") {
  struct Broken : TextExtractor {
    std::string extract(const cv::Mat&) override { throw std::runtime_error("engine down"); }
  } broken;
  CHECK(extract_text(canvas(), broken) == "");
}

TEST_CASE("real OCR engine reads a rendered word") {
  TesseractTextExtractor engine("eng");
  if (!engine.available()) {
    MESSAGE("no OCR engine data installed; skipped");
    return;
  }
  cv::Mat img = canvas(400, 120);
  cv::putText(img, "Preis", {40, 80}, cv::FONT_HERSHEY_SIMPLEX, 2.0, cv::Scalar::all(0), 4);
  CHECK(extract_text(img, engine).find("Preis") != std::string::npos);
}

TEST_CASE("augmentation is pure in its seed") {
  const GraphImage g = curve_fixture();
  AugmentationConfig off;
  off.enabled = false;
  CHECK(augment(g, off, 3).identical_to(g));

  const AugmentationConfig on;
  const auto a = augment(g, on, 42);
  const auto b = augment(g, on, 42);
  CHECK(a.identical_to(b));
  CHECK(a.hash() == b.hash());
  CHECK(augment(g, on, 43).hash() != a.hash());
  CHECK(a.pixels().rows == 224);
}

TEST_CASE("augmentation config bounds") {
  AugmentationConfig bad;
  bad.max_rotation_deg = 60;
  CHECK_THROWS(bad.validate());
  bad = {};
  bad.perspective_scale = 0.6;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("binarization variants") {
  const GraphImage g = curve_fixture();
  CHECK(binarize_variant(g, TransformVariant::color).identical_to(g));

  const GraphImage white;
  const auto t = binarize_variant(white, TransformVariant::threshold);
  CHECK(cv::countNonZero(t.pixels().reshape(1) != 255) == 0);

  const auto th = binarize_variant(g, TransformVariant::threshold);
  const auto inv = binarize_variant(g, TransformVariant::threshold_invert);
  cv::Mat complement;
  cv::bitwise_not(th.pixels(), complement);
  CHECK(cv::norm(complement, inv.pixels(), cv::NORM_INF) == 0.0);
  // The curve is dark in the fixture and bright after inversion.
  CHECK(inv.pixels().at<cv::Vec3b>(115, 110)[0] == 255);
  CHECK(inv.pixels().at<cv::Vec3b>(10, 10)[0] == 0);

  const auto edges = binarize_variant(g, TransformVariant::canny);
  CHECK(cv::countNonZero(edges.pixels().reshape(1)) > 0);

  for (auto v : {TransformVariant::color, TransformVariant::threshold, TransformVariant::threshold_invert,
                 TransformVariant::canny}) {
    CHECK(variant_from_string(to_string(v)) == v);
  }
  CHECK_THROWS(variant_from_string("sepia"));
}

TEST_CASE("ingest, extract and recrop a raw submission") {
  testing::TempDir root;
  testing::TempDir source;
  cv::Mat img = canvas();
  draw_box(img, 50, 60, 300, 280);
  cv::imwrite((source / "s1.png").string(), img);
  cv::imwrite((source / "blank.png").string(), canvas());
  std::ofstream(source / "notes.txt") << "ignored";

  DatasetManifest m;
  const auto ingest = ingest_images(m, root.path(), source.path(), "VWL7", "1");
  CHECK(ingest.added == 2);
  CHECK(ingest_images(m, root.path(), source.path(), "VWL7", "1").skipped == 2);
  CHECK(m.submission_count() == 2);
  CHECK_NOTHROW(save_manifest(m, root / "manifest.json"));

  StoredTextExtractor stub("Preis Menge");
  ExtractOptions options;
  options.interactive = true;
  const auto report = extract_graphs(m, root.path(), options, stub);
  CHECK(report.cropped == 1);
  CHECK(report.no_graph == 1);
  CHECK(report.texts == 2);

  auto ref = m.find_submission("s1");
  REQUIRE(ref.has_value());
  Submission& s = *ref->submission;
  CHECK(s.status == SubmissionStatus::extracted);
  REQUIRE(s.graph_crop.has_value());
  CHECK(std::filesystem::exists(root / *s.graph_crop));
  CHECK(iou(*s.bbox, {50, 60, 300, 280}) >= 0.9);

  CHECK(extract_graphs(m, root.path(), {}, stub).skipped == 1);

  const BoundingBox adjusted{70, 80, 200, 200};
  const auto recrop = recrop_submission(s, root.path(), adjusted);
  CHECK_FALSE(recrop.clamped);
  CHECK(s.status == SubmissionStatus::verified);
  CHECK(*s.bbox == adjusted);
  const cv::Mat stored = load_image(root / *s.graph_crop);
  CHECK(GraphImage(stored).hash() == crop_resize(img, adjusted).graph.hash());

  const auto wide = recrop_submission(s, root.path(), {100, 100, 5000, 100});
  CHECK(wide.clamped);
  CHECK(wide.box.x + wide.box.w == img.cols);
}
