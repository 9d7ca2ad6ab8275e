#include <array>
#include <random>

#include <opencv2/imgproc.hpp>

#include "graphgrade/preprocess.hpp"

namespace graphgrade {

GraphImage::GraphImage(cv::Mat pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rows != kGraphSize || pixels_.cols != kGraphSize || pixels_.type() != CV_8UC3) {
    throw std::invalid_argument("graph image must be 224x224 8-bit 3-channel");
  }
  if (!pixels_.isContinuous()) pixels_ = pixels_.clone();
}

bool GraphImage::identical_to(const GraphImage& other) const {
  return cv::norm(pixels_, other.pixels_, cv::NORM_INF) == 0.0;
}

std::uint64_t GraphImage::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* data = pixels_.ptr<unsigned char>();
  const std::size_t n = pixels_.total() * pixels_.elemSize();
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void AugmentationConfig::validate() const {
  if (max_rotation_deg < 0.0 || max_rotation_deg > 45.0) {
    throw std::invalid_argument("max_rotation_deg must lie in [0, 45]");
  }
  if (perspective_scale < 0.0 || perspective_scale > 0.5) {
    throw std::invalid_argument("perspective_scale must lie in [0, 0.5]");
  }
}

std::string to_string(TransformVariant variant) {
  switch (variant) {
    case TransformVariant::color: return "color";
    case TransformVariant::threshold: return "threshold";
    case TransformVariant::threshold_invert: return "threshold_invert";
    case TransformVariant::canny: return "canny";
  }
  return "color";
}

TransformVariant variant_from_string(const std::string& text) {
  if (text == "color") return TransformVariant::color;
  if (text == "threshold") return TransformVariant::threshold;
  if (text == "threshold_invert") return TransformVariant::threshold_invert;
  if (text == "canny") return TransformVariant::canny;
  throw std::invalid_argument("unknown transform variant '" + text + "'");
}

GraphImage augment(const GraphImage& graph, const AugmentationConfig& config,
                   std::uint64_t seed) {
  config.validate();
  if (!config.enabled) return graph;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double size = kGraphSize;
  const double angle = (2.0 * unit(rng) - 1.0) * config.max_rotation_deg;

  const cv::Point2f center(static_cast<float>(size / 2), static_cast<float>(size / 2));
  cv::Mat rotation = cv::getRotationMatrix2D(center, angle, 1.0);
  cv::Mat rotation3 = cv::Mat::eye(3, 3, CV_64F);
  rotation.copyTo(rotation3(cv::Rect(0, 0, 3, 2)));

  // Each corner moves inward by up to perspective_scale * half the side length.
  const double reach = config.perspective_scale * size / 2.0;
  const std::array<cv::Point2f, 4> src{cv::Point2f(0, 0), cv::Point2f(size - 1, 0),
                                       cv::Point2f(size - 1, size - 1),
                                       cv::Point2f(0, size - 1)};
  const std::array<cv::Point2f, 4> direction{cv::Point2f(1, 1), cv::Point2f(-1, 1),
                                             cv::Point2f(-1, -1), cv::Point2f(1, -1)};
  std::array<cv::Point2f, 4> dst;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto dx = static_cast<float>(unit(rng) * reach);
    const auto dy = static_cast<float>(unit(rng) * reach);
    dst[i] = src[i] + cv::Point2f(direction[i].x * dx, direction[i].y * dy);
  }
  cv::Mat perspective = cv::getPerspectiveTransform(src.data(), dst.data());
  cv::Mat transform = perspective * rotation3;

  cv::Mat out;
  cv::warpPerspective(graph.pixels(), out, transform, cv::Size(kGraphSize, kGraphSize),
                      cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar::all(255));
  return GraphImage(out);
}

namespace {

cv::Mat threshold_mask(const cv::Mat& gray) {
  double lo = 0.0;
  double hi = 0.0;
  cv::minMaxLoc(gray, &lo, &hi);
  if (lo == hi) {
    // A uniform image has no ink; everything is background.
    return cv::Mat(gray.size(), CV_8UC1, cv::Scalar(255));
  }
  cv::Mat binary;
  cv::threshold(gray, binary, 0, 255, cv::THRESH_BINARY | cv::THRESH_OTSU);
  return binary;
}

}  // namespace

GraphImage binarize_variant(const GraphImage& graph, TransformVariant variant) {
  if (variant == TransformVariant::color) return graph;
  cv::Mat gray;
  cv::cvtColor(graph.pixels(), gray, cv::COLOR_BGR2GRAY);
  cv::Mat single;
  switch (variant) {
    case TransformVariant::threshold:
      single = threshold_mask(gray);
      break;
    case TransformVariant::threshold_invert:
      cv::bitwise_not(threshold_mask(gray), single);
      break;
    case TransformVariant::canny:
      cv::Canny(gray, single, 50, 150);
      break;
    case TransformVariant::color:
      break;
  }
  cv::Mat out;
  cv::cvtColor(single, out, cv::COLOR_GRAY2BGR);
  return GraphImage(out);
}

}  // namespace graphgrade
