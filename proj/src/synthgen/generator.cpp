#include <cstdio>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <spdlog/spdlog.h>

#include "graphgrade/preprocess.hpp"
#include "graphgrade/random.hpp"
#include "graphgrade/synthgen.hpp"

namespace graphgrade::synth {

using nlohmann::json;

namespace {

std::string direction_name(ShiftDirection d) {
  switch (d) {
    case ShiftDirection::left: return "left";
    case ShiftDirection::right: return "right";
    case ShiftDirection::none: return "none";
  }
  return "none";
}

ShiftDirection direction_from(const std::string& s) {
  if (s == "left") return ShiftDirection::left;
  if (s == "right") return ShiftDirection::right;
  if (s == "none") return ShiftDirection::none;
  throw std::invalid_argument("unknown shift direction '" + s + "'");
}

std::string kind_name(TemplateKind k) {
  switch (k) {
    case TemplateKind::demand_shift: return "demand_shift";
    case TemplateKind::supply_shift: return "supply_shift";
    case TemplateKind::axes_labeled: return "axes_labeled";
    case TemplateKind::equilibrium_marked: return "equilibrium_marked";
  }
  return "demand_shift";
}

TemplateKind kind_from(const std::string& s) {
  if (s == "demand_shift") return TemplateKind::demand_shift;
  if (s == "supply_shift") return TemplateKind::supply_shift;
  if (s == "axes_labeled") return TemplateKind::axes_labeled;
  if (s == "equilibrium_marked") return TemplateKind::equilibrium_marked;
  throw std::invalid_argument("unknown criterion template kind '" + s + "'");
}

TaskSpec spec_from_json(const json& j) {
  TaskSpec spec;
  spec.task_id = j.at("task_id").get<std::string>();
  spec.module_id = j.value("module_id", std::string("SYN"));
  spec.assignment_id = j.value("assignment_id", spec.task_id);
  spec.task_description = j.value("task_description", std::string());
  for (const auto& t : j.at("criteria_templates")) {
    CriterionTemplate ct;
    ct.kind = kind_from(t.at("kind").get<std::string>());
    ct.description = t.value("description", kind_name(ct.kind));
    ct.when_set = direction_from(t.value("when_set", std::string("right")));
    ct.when_unset = direction_from(t.value("when_unset", std::string("none")));
    spec.criteria_templates.push_back(std::move(ct));
  }
  spec.text_templates = j.value("text_templates", std::vector<std::string>{});
  if (auto it = j.find("style"); it != j.end()) {
    spec.style.jitter_px = it->value("jitter_px", spec.style.jitter_px);
    spec.style.waviness_px = it->value("waviness_px", spec.style.waviness_px);
    spec.style.stroke_min = it->value("stroke_min", spec.style.stroke_min);
    spec.style.stroke_max = it->value("stroke_max", spec.style.stroke_max);
    spec.style.shift_offset = it->value("shift_offset", spec.style.shift_offset);
  }
  spec.validate();
  return spec;
}

}  // namespace

json to_json(const TaskSpec& spec) {
  json templates = json::array();
  for (const auto& t : spec.criteria_templates) {
    templates.push_back({{"kind", kind_name(t.kind)},
                         {"description", t.description},
                         {"when_set", direction_name(t.when_set)},
                         {"when_unset", direction_name(t.when_unset)}});
  }
  return json{{"task_id", spec.task_id},
              {"module_id", spec.module_id},
              {"assignment_id", spec.assignment_id.empty() ? spec.task_id : spec.assignment_id},
              {"task_description", spec.task_description},
              {"criteria_templates", templates},
              {"text_templates", spec.text_templates},
              {"style",
               {{"jitter_px", spec.style.jitter_px},
                {"waviness_px", spec.style.waviness_px},
                {"stroke_min", spec.style.stroke_min},
                {"stroke_max", spec.style.stroke_max},
                {"shift_offset", spec.style.shift_offset}}}};
}

std::vector<TaskSpec> specs_from_json(const json& document) {
  std::vector<TaskSpec> specs;
  if (document.is_object() && document.contains("tasks")) {
    for (const auto& t : document.at("tasks")) specs.push_back(spec_from_json(t));
  } else if (document.is_array()) {
    for (const auto& t : document) specs.push_back(spec_from_json(t));
  } else {
    specs.push_back(spec_from_json(document));
  }
  std::set<std::string> ids;
  for (const auto& s : specs) {
    if (!ids.insert(s.task_id).second) {
      throw std::invalid_argument("duplicate task id '" + s.task_id + "'");
    }
  }
  return specs;
}

CountsByTask counts_from_json(const json& document) {
  CountsByTask counts;
  for (const auto& [task, grades] : document.items()) {
    GradeCounts gc;
    for (const auto& [grade, count] : grades.items()) {
      const int n = count.get<int>();
      if (n < 0) throw std::invalid_argument("negative count for task '" + task + "'");
      gc[std::stoi(grade)] = n;
    }
    counts[task] = std::move(gc);
  }
  return counts;
}

DatasetManifest generate_dataset(const std::vector<TaskSpec>& specs, const CountsByTask& counts,
                                 std::uint64_t seed, const std::filesystem::path& out_dir,
                                 const GenerateOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  if (options.extract_crops) fs::create_directories(out_dir / "crops");

  DatasetManifest manifest;
  std::uint64_t index = 0;
  for (const auto& spec : specs) {
    spec.validate();
    Module* module = manifest.find_module(spec.module_id);
    if (module == nullptr) {
      manifest.modules.push_back({spec.module_id, {}});
      module = &manifest.modules.back();
    }
    Assignment assignment;
    assignment.rubric = spec.rubric();
    assignment.id = assignment.rubric.assignment_id;

    auto it = counts.find(spec.task_id);
    if (it != counts.end()) {
      for (const auto& [grade, count] : it->second) {
        if (count < 0) throw std::invalid_argument("negative count");
        const std::vector<int> bits = decode_grade(grade, spec.m());
        for (int n = 0; n < count; ++n, ++index) {
          char id_buf[64];
          std::snprintf(id_buf, sizeof id_buf, "%s_g%d_%04d", spec.task_id.c_str(), grade, n);
          const std::string id = id_buf;
          GeneratedSubmission generated = generate_submission(spec, bits, derive_seed(seed, index));

          Submission s;
          s.id = id;
          s.module_id = spec.module_id;
          s.assignment_id = assignment.id;
          s.original_image = "images/" + id + ".png";
          s.extracted_text = generated.text;
          if (!cv::imwrite((out_dir / s.original_image).string(), generated.image)) {
            throw std::runtime_error("cannot write " + (out_dir / s.original_image).string());
          }
          if (options.extract_crops) {
            auto region = extract_graph_region(generated.image);
            if (region) {
              const VerifiedRegion verified =
                  verify_region(generated.image, region->box, auto_accept_verifier());
              const CropResult crop = crop_resize(generated.image, verified.box);
              s.graph_crop = "crops/" + id + ".png";
              s.bbox = verified.box;
              s.status = SubmissionStatus::verified;
              if (!cv::imwrite((out_dir / *s.graph_crop).string(), crop.graph.pixels())) {
                throw std::runtime_error("cannot write crop for " + id);
              }
            } else {
              spdlog::warn("no graph region found in synthetic submission {}", id);
            }
          }
          generated.annotation.submission_id = id;
          assignment.submissions.push_back(std::move(s));
          assignment.annotations.push_back(std::move(generated.annotation));
        }
      }
    }
    module->assignments.push_back(std::move(assignment));
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace graphgrade::synth
