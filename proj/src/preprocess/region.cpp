#include <algorithm>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "graphgrade/preprocess.hpp"

namespace graphgrade {

namespace {

cv::Mat to_gray(const cv::Mat& image) {
  cv::Mat gray;
  if (image.channels() == 1) {
    gray = image;
  } else if (image.channels() == 4) {
    cv::cvtColor(image, gray, cv::COLOR_BGRA2GRAY);
  } else {
    cv::cvtColor(image, gray, cv::COLOR_BGR2GRAY);
  }
  return gray;
}

}  // namespace

std::optional<RegionDetection> extract_graph_region(const cv::Mat& image,
                                                    const RegionConfig& config) {
  if (image.empty()) throw std::invalid_argument("empty image");
  if (std::min(image.rows, image.cols) < 64) {
    throw std::invalid_argument("image smaller than 64 px in one dimension");
  }
  cv::Mat gray = to_gray(image);

  double lo = 0.0;
  double hi = 0.0;
  cv::minMaxLoc(gray, &lo, &hi);
  if (lo == hi) return std::nullopt;

  // Ink becomes foreground.
  cv::Mat binary;
  cv::threshold(gray, binary, 0, 255, cv::THRESH_BINARY_INV | cv::THRESH_OTSU);
  const cv::Mat kernel = cv::getStructuringElement(
      cv::MORPH_RECT, cv::Size(config.close_kernel, config.close_kernel));
  cv::morphologyEx(binary, binary, cv::MORPH_CLOSE, kernel, cv::Point(-1, -1),
                   config.close_iterations);

  std::vector<std::vector<cv::Point>> contours;
  cv::findContours(binary, contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_SIMPLE);

  const double image_area = static_cast<double>(image.rows) * image.cols;
  std::optional<RegionDetection> best;
  int candidates = 0;
  for (const auto& contour : contours) {
    const cv::Rect rect = cv::boundingRect(contour);
    const double aspect = static_cast<double>(rect.width) / rect.height;
    const double fraction = rect.area() / image_area;
    if (aspect < config.min_aspect || aspect > config.max_aspect) continue;
    if (fraction < config.min_area_fraction) continue;
    ++candidates;
    if (!best || fraction > best->score) {
      best = RegionDetection{{rect.x, rect.y, rect.width, rect.height}, fraction, 0};
    }
  }
  if (best) best->candidates = candidates;
  return best;
}

RegionVerifier auto_accept_verifier() {
  return [](const cv::Mat&, const BoundingBox& proposed) { return proposed; };
}

std::optional<BoundingBox> clamp_box(const BoundingBox& box, int width, int height) {
  const int x0 = std::clamp(box.x, 0, width);
  const int y0 = std::clamp(box.y, 0, height);
  const int x1 = std::clamp(box.x + box.w, 0, width);
  const int y1 = std::clamp(box.y + box.h, 0, height);
  if (x1 - x0 < 1 || y1 - y0 < 1) return std::nullopt;
  return BoundingBox{x0, y0, x1 - x0, y1 - y0};
}

VerifiedRegion verify_region(const cv::Mat& image, const BoundingBox& proposed,
                             const RegionVerifier& verifier) {
  const BoundingBox answer = verifier(image, proposed);
  auto clamped = clamp_box(answer, image.cols, image.rows);
  if (!clamped) throw std::invalid_argument("verified box lies entirely outside the image");
  const bool changed = !(*clamped == answer);
  if (changed) {
    spdlog::warn("bounding box ({},{},{},{}) clamped to image {}x{}", answer.x, answer.y, answer.w,
                 answer.h, image.cols, image.rows);
  }
  return {*clamped, changed};
}

CropResult crop_resize(const cv::Mat& image, const BoundingBox& box) {
  if (image.empty()) throw std::invalid_argument("empty image");
  auto clamped = clamp_box(box, image.cols, image.rows);
  if (!clamped) throw std::invalid_argument("degenerate bounding box after clamping");

  cv::Mat region = image(cv::Rect(clamped->x, clamped->y, clamped->w, clamped->h));
  cv::Mat color;
  if (region.channels() == 1) {
    cv::cvtColor(region, color, cv::COLOR_GRAY2BGR);
  } else if (region.channels() == 4) {
    cv::cvtColor(region, color, cv::COLOR_BGRA2BGR);
  } else {
    color = region.clone();
  }

  CropResult result;
  result.source = *clamped;
  const double aspect = static_cast<double>(clamped->w) / clamped->h;
  result.extreme_aspect = aspect > 4.0 || aspect < 0.25;
  if (result.extreme_aspect) {
    spdlog::warn("extreme crop aspect {}x{} resized to {}x{}", clamped->w, clamped->h, kGraphSize,
                 kGraphSize);
  }

  if (color.cols == kGraphSize && color.rows == kGraphSize) {
    result.graph = GraphImage(color);
    return result;
  }
  cv::Mat resized;
  const bool shrinking = color.cols > kGraphSize && color.rows > kGraphSize;
  cv::resize(color, resized, cv::Size(kGraphSize, kGraphSize), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  result.graph = GraphImage(resized);
  return result;
}

cv::Mat load_image(const std::filesystem::path& path) {
  cv::Mat image = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (image.empty()) throw std::runtime_error("cannot read image " + path.string());
  return image;
}

}  // namespace graphgrade
