#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <opencv2/core.hpp>

#include "graphgrade/dataset.hpp"

namespace graphgrade {

inline constexpr int kGraphSize = 224;

/// A model-ready graph crop: exactly 224x224, 8-bit BGR.
class GraphImage {
 public:
  GraphImage() : pixels_(kGraphSize, kGraphSize, CV_8UC3, cv::Scalar::all(255)) {}
  /// Throws std::invalid_argument unless `pixels` is 224x224 CV_8UC3.
  explicit GraphImage(cv::Mat pixels);

  const cv::Mat& pixels() const { return pixels_; }
  bool identical_to(const GraphImage& other) const;
  /// FNV-1a over the raw pixel bytes.
  std::uint64_t hash() const;

 private:
  cv::Mat pixels_;
};

struct AugmentationConfig {
  double max_rotation_deg = 10.0;
  double perspective_scale = 0.2;
  bool enabled = true;

  void validate() const;
};

enum class TransformVariant { color, threshold, threshold_invert, canny };

std::string to_string(TransformVariant variant);
TransformVariant variant_from_string(const std::string& text);

/// Constants of the graph-region detector. Defaults are declared choices, not measured ones.
struct RegionConfig {
  int close_kernel = 5;
  int close_iterations = 2;
  double min_aspect = 0.5;
  double max_aspect = 2.0;
  double min_area_fraction = 0.05;
};

struct RegionDetection {
  BoundingBox box;
  double score = 0.0;  // bounding-rect area as a fraction of the image
  int candidates = 0;
};

/// Largest square-like contour of the binarized, closed image. Returns nullopt ("no graph")
/// when no contour passes the aspect and area filters.
std::optional<RegionDetection> extract_graph_region(const cv::Mat& image,
                                                    const RegionConfig& config = {});

/// Receives the image and proposed box; returns the accepted or adjusted box.
using RegionVerifier = std::function<BoundingBox(const cv::Mat&, const BoundingBox&)>;

RegionVerifier auto_accept_verifier();

struct VerifiedRegion {
  BoundingBox box;
  bool clamped = false;
};

/// Clamps to the image; returns nullopt when nothing of the box remains inside.
std::optional<BoundingBox> clamp_box(const BoundingBox& box, int width, int height);

/// Runs the verifier on the caller's thread and clamps its answer to the image.
VerifiedRegion verify_region(const cv::Mat& image, const BoundingBox& proposed,
                             const RegionVerifier& verifier);

struct CropResult {
  GraphImage graph;
  BoundingBox source;           // clamped region actually cropped
  bool extreme_aspect = false;  // aspect beyond 4:1 either way
};

/// Direct (anisotropic) resize of the clamped region to 224x224.
CropResult crop_resize(const cv::Mat& image, const BoundingBox& box);

/// Text-extraction adapter.
class TextExtractor {
 public:
  virtual ~TextExtractor() = default;
  virtual std::string extract(const cv::Mat& image) = 0;
};

/// Returns the text it was constructed with, whatever the image.
class StoredTextExtractor : public TextExtractor {
 public:
  explicit StoredTextExtractor(std::string text = {}) : text_(std::move(text)) {}
  std::string extract(const cv::Mat&) override { return text_; }

 private:
  std::string text_;
};

/// Tesseract through OpenCV's text module. `available()` is false when the library was built
/// without it or when no trained data for `language` can be found.
class TesseractTextExtractor : public TextExtractor {
 public:
  explicit TesseractTextExtractor(std::string language = "deu", std::string tessdata_dir = {});
  ~TesseractTextExtractor() override;

  bool available() const;
  std::string extract(const cv::Mat& image) override;

  /// Searches TESSDATA_PREFIX and the usual install locations for `<language>.traineddata`.
  static std::optional<std::string> find_tessdata(const std::string& language);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Engine failures degrade to an empty string with a logged warning.
std::string extract_text(const cv::Mat& image, TextExtractor& engine);

/// Random small rotation followed by a random perspective warp. Pure in (graph, config, seed).
GraphImage augment(const GraphImage& graph, const AugmentationConfig& config, std::uint64_t seed);

GraphImage binarize_variant(const GraphImage& graph, TransformVariant variant);

cv::Mat load_image(const std::filesystem::path& path);

/// Writes `crops/<submission id>.png` under the dataset root and returns the relative path.
std::string write_crop(const std::filesystem::path& dataset_root, const std::string& submission_id,
                       const GraphImage& graph);

struct IngestReport {
  int added = 0;
  int skipped = 0;  // already present
};

/// Copies PNG/JPEG files from `source_dir` into `images/` as raw submissions of one assignment.
/// Missing module or assignment entries are created with an empty rubric.
IngestReport ingest_images(DatasetManifest& manifest, const std::filesystem::path& dataset_root,
                           const std::filesystem::path& source_dir, const std::string& module_id,
                           const std::string& assignment_id);

struct ExtractOptions {
  RegionConfig region;
  TransformVariant variant = TransformVariant::color;
  bool interactive = false;  // leave proposals for review instead of auto-accepting
  bool overwrite = false;    // reprocess submissions that already have a crop
};

struct ExtractReport {
  int cropped = 0;
  int no_graph = 0;
  int skipped = 0;
  int texts = 0;
};

/// Detects, verifies and crops the graph region of each submission; fills empty texts.
/// Auto-accepted boxes are marked verified; interactive runs leave them extracted.
ExtractReport extract_graphs(DatasetManifest& manifest, const std::filesystem::path& dataset_root,
                             const ExtractOptions& options, TextExtractor& text_engine);

struct RecropResult {
  BoundingBox box;
  bool clamped = false;
};

/// Stores `box` (clamped to the image), regenerates the crop and marks the submission verified.
RecropResult recrop_submission(Submission& submission, const std::filesystem::path& dataset_root,
                               const BoundingBox& box);

}  // namespace graphgrade
