#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace graphgrade {

/// Largest rubric size supported by the grade encoding.
inline constexpr int kMaxCriteria = 16;
inline constexpr int kSchemaVersion = 1;

struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool operator==(const BoundingBox&) const = default;
  int area() const { return w * h; }
};

struct Criterion {
  std::string id;
  std::string description;
  int index = 0;

  bool operator==(const Criterion&) const = default;
};

/// Criterion order is authoring order; index 0 carries weight 2^0.
struct Rubric {
  std::string assignment_id;
  std::vector<Criterion> criteria;
  std::string task_description;

  int m() const { return static_cast<int>(criteria.size()); }
  int grade_count() const { return 1 << m(); }
  bool operator==(const Rubric&) const = default;
};

enum class SubmissionStatus { raw, extracted, verified };

std::string to_string(SubmissionStatus status);
SubmissionStatus status_from_string(const std::string& text);

struct Submission {
  std::string id;
  std::string module_id;
  std::string assignment_id;
  std::string original_image;              // relative to dataset root
  std::optional<std::string> graph_crop;   // relative to dataset root
  std::string extracted_text;
  std::optional<BoundingBox> bbox;
  SubmissionStatus status = SubmissionStatus::raw;

  bool operator==(const Submission&) const = default;
};

struct Annotation {
  std::string submission_id;
  std::vector<int> criteria_vector;
  int grade = 0;
  std::string annotator_id;

  bool operator==(const Annotation&) const = default;
};

struct Assignment {
  std::string id;
  Rubric rubric;
  std::vector<Submission> submissions;
  std::vector<Annotation> annotations;

  const Annotation* annotation_for(const std::string& submission_id) const;
  const Submission* submission(const std::string& submission_id) const;
  bool operator==(const Assignment&) const = default;
};

struct Module {
  std::string id;
  std::vector<Assignment> assignments;

  bool operator==(const Module&) const = default;
};

struct DatasetManifest {
  int schema_version = kSchemaVersion;
  std::vector<Module> modules;

  Module* find_module(const std::string& id);
  const Module* find_module(const std::string& id) const;
  Assignment* find_assignment(const std::string& module_id, const std::string& assignment_id);
  const Assignment* find_assignment(const std::string& module_id,
                                    const std::string& assignment_id) const;

  struct SubmissionRef {
    Module* module = nullptr;
    Assignment* assignment = nullptr;
    Submission* submission = nullptr;
  };
  /// Submission ids are unique across the whole dataset.
  std::optional<SubmissionRef> find_submission(const std::string& submission_id);

  std::size_t submission_count() const;
  std::size_t annotation_count() const;
  bool operator==(const DatasetManifest&) const = default;
};

class GradeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Schema or reference violation. `location()` is a JSON pointer into the manifest.
class ManifestError : public std::runtime_error {
 public:
  ManifestError(std::string location, const std::string& message);
  const std::string& location() const { return location_; }

 private:
  std::string location_;
};

// Grade = sum_i C_i * 2^i.
int encode_grade(std::span<const int> criteria_vector);
std::vector<int> decode_grade(int grade, int m);

/// Criteria vectors as a compact bracketed list, e.g. "[0,1]".
std::string format_criteria(std::span<const int> criteria_vector);

struct StatsRow {
  std::string module_id;
  std::string assignment_id;
  int grade = 0;
  int count = 0;

  bool operator==(const StatsRow&) const = default;
};

/// Counts annotated submissions per (module, assignment, grade). Rows for every
/// grade in [0, 2^m) are present, including zero counts.
std::vector<StatsRow> compute_stats(const DatasetManifest& manifest);

/// Full structural and referential check; throws ManifestError.
void validate(const DatasetManifest& manifest);

nlohmann::json to_json(const DatasetManifest& manifest);
/// Parses and validates; throws ManifestError with the offending location.
DatasetManifest manifest_from_json(const nlohmann::json& document);

DatasetManifest load_manifest(const std::filesystem::path& path);
/// Validates, then writes via temp file + rename.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Atomically replaces `path` with `contents`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace graphgrade
