#include <algorithm>

#include <opencv2/imgcodecs.hpp>
#include <spdlog/spdlog.h>

#include "graphgrade/preprocess.hpp"

namespace graphgrade {

namespace fs = std::filesystem;

std::string write_crop(const fs::path& dataset_root, const std::string& submission_id, const GraphImage& graph) {
  const std::string rel = "crops/" + submission_id + ".png";
  std::vector<uchar> png;
  if (!cv::imencode(".png", graph.pixels(), png)) throw std::runtime_error("cannot encode crop for " + submission_id);
  fs::create_directories(dataset_root / "crops");
  write_file_atomic(dataset_root / rel, std::string(png.begin(), png.end()));
  return rel;
}

IngestReport ingest_images(DatasetManifest& manifest, const fs::path& dataset_root, const fs::path& source_dir,
                           const std::string& module_id, const std::string& assignment_id) {
  if (!fs::is_directory(source_dir)) throw std::invalid_argument("not a directory: " + source_dir.string());
  Module* module = manifest.find_module(module_id);
  if (!module) {
    manifest.modules.push_back({module_id, {}});
    module = &manifest.modules.back();
  }
  Assignment* assignment = manifest.find_assignment(module_id, assignment_id);
  if (!assignment) {
    Assignment a;
    a.id = assignment_id;
    a.rubric.assignment_id = assignment_id;
    module->assignments.push_back(std::move(a));
    assignment = &module->assignments.back();
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(source_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(dataset_root / "images");
  IngestReport report;
  for (const auto& file : files) {
    const std::string id = file.stem().string();
    if (manifest.find_submission(id)) {
      ++report.skipped;
      continue;
    }
    const std::string rel = "images/" + file.filename().string();
    fs::copy_file(file, dataset_root / rel, fs::copy_options::overwrite_existing);
    Submission s;
    s.id = id;
    s.module_id = module_id;
    s.assignment_id = assignment_id;
    s.original_image = rel;
    assignment->submissions.push_back(std::move(s));
    ++report.added;
  }
  return report;
}

ExtractReport extract_graphs(DatasetManifest& manifest, const fs::path& dataset_root, const ExtractOptions& options,
                             TextExtractor& text_engine) {
  ExtractReport report;
  const RegionVerifier verifier = auto_accept_verifier();
  for (auto& module : manifest.modules) {
    for (auto& assignment : module.assignments) {
      for (auto& s : assignment.submissions) {
        if (s.graph_crop && !options.overwrite) {
          ++report.skipped;
          continue;
        }
        const cv::Mat image = load_image(dataset_root / s.original_image);
        if (s.extracted_text.empty()) {
          s.extracted_text = extract_text(image, text_engine);
          if (!s.extracted_text.empty()) ++report.texts;
        }
        const auto detection = extract_graph_region(image, options.region);
        if (!detection) {
          spdlog::warn("no graph found in {}", s.original_image);
          ++report.no_graph;
          continue;
        }
        const VerifiedRegion region = verify_region(image, detection->box, verifier);
        const CropResult crop = crop_resize(image, region.box);
        const GraphImage graph =
            options.variant == TransformVariant::color ? crop.graph : binarize_variant(crop.graph, options.variant);
        s.graph_crop = write_crop(dataset_root, s.id, graph);
        s.bbox = crop.source;
        s.status = options.interactive ? SubmissionStatus::extracted : SubmissionStatus::verified;
        ++report.cropped;
      }
    }
  }
  return report;
}

RecropResult recrop_submission(Submission& submission, const fs::path& dataset_root, const BoundingBox& box) {
  const cv::Mat image = load_image(dataset_root / submission.original_image);
  const auto clamped = clamp_box(box, image.cols, image.rows);
  if (!clamped) throw std::invalid_argument("bounding box lies outside the image");
  const CropResult crop = crop_resize(image, *clamped);
  submission.graph_crop = write_crop(dataset_root, submission.id, crop.graph);
  submission.bbox = crop.source;
  submission.status = SubmissionStatus::verified;
  return {crop.source, !(crop.source == box)};
}

}  // namespace graphgrade
