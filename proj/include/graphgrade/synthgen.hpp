#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "graphgrade/dataset.hpp"

namespace graphgrade::synth {

enum class ShiftDirection { left, right, none };

enum class TemplateKind { demand_shift, supply_shift, axes_labeled, equilibrium_marked };

/// One controllable property of the rendered diagram, mapped to one criterion bit.
/// For shift templates, `when_set` is drawn for bit 1 and `when_unset` for bit 0.
struct CriterionTemplate {
  TemplateKind kind = TemplateKind::demand_shift;
  std::string description;
  ShiftDirection when_set = ShiftDirection::right;
  ShiftDirection when_unset = ShiftDirection::none;
};

struct Style {
  double jitter_px = 2.0;     // per-vertex Gaussian sigma
  double waviness_px = 2.0;   // sinusoidal amplitude
  int stroke_min = 2;
  int stroke_max = 3;
  double shift_offset = 0.15;  // fraction of the axis width
};

struct TaskSpec {
  std::string task_id;
  std::string module_id = "SYN";
  std::string assignment_id;  // defaults to task_id
  std::string task_description;
  std::vector<CriterionTemplate> criteria_templates;
  std::vector<std::string> text_templates;
  Style style;

  int m() const { return static_cast<int>(criteria_templates.size()); }
  Rubric rubric() const;
  /// Throws std::invalid_argument for template combinations that cannot be rendered.
  void validate() const;
};

/// The canonical separable task: one criterion, demand shifted right (1) versus left (0).
TaskSpec shift_direction_task(std::string task_id = "shift", double shift_offset = 0.15);
/// Two criteria (demand shifted right, axes labeled), four grades.
TaskSpec shift_and_labels_task(std::string task_id = "shift_labels");

enum class CurveKind { supply, demand };

struct CurveSpec {
  CurveKind kind = CurveKind::demand;
  int slope_sign = -1;        // in plot coordinates (y up)
  double shift_offset = 0.0;  // fraction of axis width, signed
  double waviness_px = 0.0;
};

/// Vector geometry behind one rendered image, in image pixel coordinates (y down).
struct Scene {
  struct Curve {
    std::string role;  // "supply", "demand", "demand_shifted", "supply_shifted"
    CurveSpec spec;
    std::vector<cv::Point2d> centerline;  // noiseless line
    std::vector<cv::Point2d> stroke;      // what was drawn
  };
  std::vector<Curve> curves;
  cv::Point2d origin;  // axis origin
  double axis_width = 0.0;
  double axis_height = 0.0;
  bool axis_labels_drawn = false;
  std::optional<cv::Point2d> equilibrium_marker;
  BoundingBox graph_box;  // extent of the diagram strokes
  std::string text;       // text written on the page

  const Curve* find(const std::string& role) const;
};

struct GeneratedSubmission {
  cv::Mat image;
  std::string text;
  Annotation annotation;
  Scene scene;
};

GeneratedSubmission generate_submission(const TaskSpec& spec,
                                        const std::vector<int>& criteria_vector,
                                        std::uint64_t seed);

/// Requested submission count per grade, per task id.
using GradeCounts = std::map<int, int>;
using CountsByTask = std::map<std::string, GradeCounts>;

struct GenerateOptions {
  bool extract_crops = true;  // run graph extraction with the auto-accept verifier
};

/// Writes images (and crops) under `out_dir` plus `manifest.json`; returns the manifest.
DatasetManifest generate_dataset(const std::vector<TaskSpec>& specs, const CountsByTask& counts,
                                 std::uint64_t seed, const std::filesystem::path& out_dir,
                                 const GenerateOptions& options = {});

std::vector<TaskSpec> specs_from_json(const nlohmann::json& document);
nlohmann::json to_json(const TaskSpec& spec);
CountsByTask counts_from_json(const nlohmann::json& document);

}  // namespace graphgrade::synth
