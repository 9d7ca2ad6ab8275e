#include <doctest.h>

#include <chrono>
#include <fstream>
#include <set>

#include "graphgrade/dataset.hpp"
#include "graphgrade/store.hpp"
#include "support.hpp"

using namespace graphgrade;

TEST_CASE("encode_grade weights criterion i by 2^i") {
  CHECK(encode_grade(std::vector<int>{1, 0}) == 1);
  CHECK(encode_grade(std::vector<int>{1, 1}) == 3);
  CHECK(encode_grade(std::vector<int>{0, 0, 1}) == 4);
  CHECK(encode_grade(std::vector<int>{0, 1}) == 2);
}

TEST_CASE("decode_grade inverts encode_grade") {
  CHECK(decode_grade(3, 2) == std::vector<int>{1, 1});
  CHECK(decode_grade(0, 4) == std::vector<int>{0, 0, 0, 0});
  CHECK(decode_grade(5, 3) == std::vector<int>{1, 0, 1});
}

TEST_CASE("grade encoding rejects bad input") {
  CHECK_THROWS_AS(encode_grade(std::vector<int>{}), GradeError);
  CHECK_THROWS_AS(encode_grade(std::vector<int>{0, 2}), GradeError);
  CHECK_THROWS_AS(encode_grade(std::vector<int>(kMaxCriteria + 1, 0)), GradeError);
  CHECK_THROWS_AS(decode_grade(4, 2), GradeError);
  CHECK_THROWS_AS(decode_grade(-1, 2), GradeError);
  CHECK_THROWS_AS(decode_grade(0, 0), GradeError);
}

TEST_CASE("grade encoding is a bijection for m up to 10") {
  for (int m = 1; m <= 10; ++m) {
    std::set<int> seen;
    for (int g = 0; g < (1 << m); ++g) {
      const auto v = decode_grade(g, m);
      REQUIRE(static_cast<int>(v.size()) == m);
      CHECK(encode_grade(v) == g);
      seen.insert(encode_grade(v));
    }
    CHECK(static_cast<int>(seen.size()) == (1 << m));
  }
}

TEST_CASE("format_criteria renders a compact list") {
  CHECK(format_criteria(std::vector<int>{0, 1}) == "[0,1]");
}

TEST_CASE("compute_stats counts annotated submissions and keeps empty grades") {
  auto manifest = testing::make_manifest({{"M", "a", 2, {{0, 3}, {1, 0}, {3, 2}}}, {"M", "b", 1, {{1, 4}}}});
  // One unannotated submission must not be counted.
  Submission extra;
  extra.id = "loose";
  extra.module_id = "M";
  extra.assignment_id = "a";
  extra.original_image = "images/loose.png";
  manifest.modules[0].assignments[0].submissions.push_back(extra);

  const auto rows = compute_stats(manifest);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0] == StatsRow{"M", "a", 0, 3});
  CHECK(rows[1] == StatsRow{"M", "a", 1, 0});
  CHECK(rows[2] == StatsRow{"M", "a", 2, 0});
  CHECK(rows[3] == StatsRow{"M", "a", 3, 2});
  CHECK(rows[4] == StatsRow{"M", "b", 0, 0});
  CHECK(rows[5] == StatsRow{"M", "b", 1, 4});
}

TEST_CASE("compute_stats on a single table row") {
  const auto manifest = testing::make_manifest({{"VWL8", "1", 1, {{0, 7}, {1, 58}}}});
  const auto rows = compute_stats(manifest);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].count == 7);
  CHECK(rows[1].count == 58);
  CHECK(compute_stats(DatasetManifest{}).empty());
}

TEST_CASE("compute_stats totals equal the annotation count on the table fixture") {
  const auto manifest = testing::make_manifest(testing::table2_cells());
  int total = 0;
  for (const auto& r : compute_stats(manifest)) total += r.count;
  CHECK(total == static_cast<int>(manifest.annotation_count()));
  CHECK(total == 1174);
}

TEST_CASE("manifest round trip is the identity") {
  testing::TempDir dir;
  SUBCASE("minimal manifest") {
    DatasetManifest m;
    Assignment a;
    a.id = "1";
    a.rubric = {"1", {{"c0", "correct shift of demand curve to the right", 0}}, "Draw the market."};
    m.modules.push_back({"VWL7", {a}});
    save_manifest(m, dir / "manifest.json");
    CHECK(load_manifest(dir / "manifest.json") == m);
  }
  SUBCASE("all optional fields") {
    auto m = testing::make_manifest({{"M", "a", 2, {{0, 2}, {3, 1}}}});
    auto& s = m.modules[0].assignments[0].submissions[0];
    s.bbox = BoundingBox{1, 2, 30, 40};
    s.extracted_text = "Preis und Menge \"quoted\"";
    s.status = SubmissionStatus::extracted;
    m.modules[0].assignments[0].submissions[1].graph_crop.reset();
    m.modules[0].assignments[0].submissions[1].bbox.reset();
    m.modules[0].assignments[0].submissions[1].status = SubmissionStatus::raw;
    save_manifest(m, dir / "manifest.json");
    CHECK(load_manifest(dir / "manifest.json") == m);
  }
}

TEST_CASE("manifest of 1,174 entries round trips within 2 s") {
  testing::TempDir dir;
  const auto m = testing::make_manifest(testing::table2_cells());
  const auto start = std::chrono::steady_clock::now();
  save_manifest(m, dir / "manifest.json");
  const auto back = load_manifest(dir / "manifest.json");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(back == m);
  CHECK(back.submission_count() == 1174);
  CHECK(secs < 2.0);
}

TEST_CASE("dangling annotation is rejected with its location") {
  auto m = testing::make_manifest({{"M", "a", 1, {{0, 1}}}});
  m.modules[0].assignments[0].annotations.push_back({"ghost", {1}, 1, "x"});
  try {
    validate(m);
    FAIL("expected a ManifestError");
  } catch (const ManifestError& e) {
    CHECK(e.location() == "/modules/0/assignments/0/annotations/1/submission_id");
  }
}

TEST_CASE("schema violations name the offending key") {
  const nlohmann::json doc = {{"schema_version", kSchemaVersion},
                              {"modules", {{{"id", "M"}, {"assignments", {{{"id", "a"}}}}}}}};
  try {
    manifest_from_json(doc);
    FAIL("expected a ManifestError");
  } catch (const ManifestError& e) {
    CHECK(std::string(e.location()).find("/modules/0/assignments/0") == 0);
  }
}

TEST_CASE("annotation grade must agree with its vector") {
  auto m = testing::make_manifest({{"M", "a", 2, {{1, 1}}}});
  m.modules[0].assignments[0].annotations[0].grade = 2;
  CHECK_THROWS_AS(validate(m), ManifestError);
}

TEST_CASE("an empty rubric is allowed until something is annotated") {
  DatasetManifest m;
  Assignment a;
  a.id = "new";
  m.modules.push_back({"M", {a}});
  CHECK_NOTHROW(validate(m));
  CHECK(compute_stats(m).empty());
}

TEST_CASE("malformed JSON file reports a manifest error") {
  testing::TempDir dir;
  std::ofstream(dir / "manifest.json") << "{ not json";
  CHECK_THROWS_AS(load_manifest(dir / "manifest.json"), ManifestError);
}

TEST_CASE("store update is all or nothing") {
  testing::TempDir dir;
  const auto m = testing::make_manifest({{"M", "a", 1, {{0, 2}, {1, 2}}}});
  save_manifest(m, dir / "manifest.json");
  DatasetStore store(dir.path());

  CHECK_THROWS_AS(store.update([](DatasetManifest& d) {
                    d.modules[0].assignments[0].annotations[0].grade = 7;  // invalid
                  }),
                  ManifestError);
  CHECK(store.snapshot() == m);
  CHECK(load_manifest(dir / "manifest.json") == m);

  store.update([](DatasetManifest& d) { d.modules[0].assignments[0].rubric.task_description = "changed"; });
  CHECK(store.snapshot().modules[0].assignments[0].rubric.task_description == "changed");
  CHECK(load_manifest(dir / "manifest.json").modules[0].assignments[0].rubric.task_description == "changed");
}

TEST_CASE("writer lock admits one holder") {
  testing::TempDir dir;
  {
    WriterLock first(dir.path());
    CHECK_THROWS_AS(WriterLock(dir.path()), LockHeldError);
  }
  CHECK_NOTHROW(WriterLock(dir.path()));
}
