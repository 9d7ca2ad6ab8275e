#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "graphgrade/dataset.hpp"
#include "graphgrade/synthgen.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "graphgrade-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

struct CellCounts {
  std::string module_id;
  std::string assignment_id;
  int m = 1;
  std::map<int, int> counts;  // grade -> annotated submissions
};

inline constexpr int kFixtureSide = 224;

/// Annotated manifest without image files; every submission is verified with a crop path.
inline graphgrade::DatasetManifest make_manifest(const std::vector<CellCounts>& cells) {
  using namespace graphgrade;
  DatasetManifest manifest;
  for (const auto& c : cells) {
    Module* module = manifest.find_module(c.module_id);
    if (!module) {
      manifest.modules.push_back({c.module_id, {}});
      module = &manifest.modules.back();
    }
    Assignment a;
    a.id = c.assignment_id;
    a.rubric.assignment_id = c.assignment_id;
    a.rubric.task_description = "task " + c.assignment_id;
    for (int i = 0; i < c.m; ++i) a.rubric.criteria.push_back({"c" + std::to_string(i), "criterion " + std::to_string(i), i});
    for (const auto& [grade, n] : c.counts) {
      for (int j = 0; j < n; ++j) {
        Submission s;
        s.id = c.module_id + "-" + c.assignment_id + "-g" + std::to_string(grade) + "-" + std::to_string(j);
        s.module_id = c.module_id;
        s.assignment_id = c.assignment_id;
        s.original_image = "images/" + s.id + ".png";
        s.graph_crop = "crops/" + s.id + ".png";
        s.bbox = BoundingBox{0, 0, kFixtureSide, kFixtureSide};
        s.status = SubmissionStatus::verified;
        a.annotations.push_back({s.id, decode_grade(grade, c.m), grade, "fixture"});
        a.submissions.push_back(std::move(s));
      }
    }
    module->assignments.push_back(std::move(a));
  }
  return manifest;
}

/// Writes a small distinct PNG at every crop path of the manifest.
inline void write_fixture_crops(const graphgrade::DatasetManifest& manifest, const fs::path& root) {
  for (const auto& module : manifest.modules) {
    for (const auto& a : module.assignments) {
      for (const auto& s : a.submissions) {
        if (!s.graph_crop) continue;
        const std::uint64_t h = std::hash<std::string>{}(s.id);
        cv::Mat img(16, 16, CV_8UC3, cv::Scalar(h & 0xff, (h >> 8) & 0xff, (h >> 16) & 0xff));
        img.at<cv::Vec3b>(static_cast<int>((h >> 24) % 16), static_cast<int>((h >> 28) % 16)) = cv::Vec3b(0, 0, 0);
        fs::create_directories((root / *s.graph_crop).parent_path());
        cv::imwrite((root / *s.graph_crop).string(), img);
      }
    }
  }
}

/// Graph counts per (module, assignment, grade) as listed in the dataset table of the paper.
inline std::vector<CellCounts> table2_cells() {
  return {
      {"VWL7", "1", 2, {{0, 3}, {1, 1}, {2, 10}, {3, 30}}},
      {"VWL7", "2", 1, {{0, 45}, {1, 20}}},
      {"VWL7", "3", 1, {{0, 24}, {1, 40}}},
      {"VWL7", "4", 1, {{0, 9}, {1, 54}}},
      {"VWL7", "5", 2, {{0, 7}, {1, 35}, {2, 1}, {3, 18}}},
      {"VWL7", "6", 2, {{0, 5}, {1, 3}, {2, 1}, {3, 52}}},
      {"VWL7", "7", 2, {{0, 20}, {1, 0}, {2, 21}, {3, 17}}},
      {"VWL7", "8", 2, {{0, 4}, {1, 1}, {2, 1}, {3, 53}}},
      {"VWL8", "1", 1, {{0, 7}, {1, 58}}},
      {"VWL8", "17", 2, {{0, 7}, {1, 23}, {2, 0}, {3, 32}}},
      {"VWL8", "3", 2, {{0, 17}, {1, 5}, {2, 37}, {3, 7}}},
      {"VWL8", "4", 1, {{0, 20}, {1, 36}}},
      {"VWL9", "1", 2, {{0, 17}, {1, 52}, {2, 4}, {3, 19}}},
      {"VWL9", "2", 2, {{0, 32}, {1, 50}, {2, 4}, {3, 7}}},
      {"VWL9", "3", 2, {{0, 50}, {1, 1}, {2, 2}, {3, 32}}},
      {"VWL9", "5", 2, {{0, 11}, {1, 11}, {2, 1}, {3, 69}}},
      {"VWL9", "8", 2, {{0, 64}, {3, 24}}},
  };
}

/// Rendered single-criterion shift-direction dataset with crops.
inline graphgrade::DatasetManifest make_shift_dataset(const fs::path& root, int per_grade, std::uint64_t seed,
                                                      double offset = 0.15) {
  using namespace graphgrade::synth;
  const TaskSpec spec = shift_direction_task("shift", offset);
  CountsByTask counts;
  counts[spec.task_id] = {{0, per_grade}, {1, per_grade}};
  return generate_dataset({spec}, counts, seed, root);
}

/// Permutes grades among the annotated submissions of each assignment so that labels carry no
/// information about the images.
inline graphgrade::DatasetManifest shuffle_labels(graphgrade::DatasetManifest manifest, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& module : manifest.modules) {
    for (auto& a : module.assignments) {
      std::vector<int> grades;
      for (const auto& an : a.annotations) grades.push_back(an.grade);
      std::shuffle(grades.begin(), grades.end(), rng);
      for (std::size_t i = 0; i < grades.size(); ++i) {
        a.annotations[i].grade = grades[i];
        a.annotations[i].criteria_vector = graphgrade::decode_grade(grades[i], a.rubric.m());
      }
    }
  }
  return manifest;
}

}  // namespace testing
