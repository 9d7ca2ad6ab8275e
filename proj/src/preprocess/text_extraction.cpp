#include <cstdlib>
#include <filesystem>

#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#ifdef GRAPHGRADE_HAVE_OCR
#include <opencv2/text.hpp>
#endif

#include "graphgrade/preprocess.hpp"

namespace graphgrade {

struct TesseractTextExtractor::Impl {
#ifdef GRAPHGRADE_HAVE_OCR
  cv::Ptr<cv::text::OCRTesseract> engine;
#endif
  bool ready = false;
};

std::optional<std::string> TesseractTextExtractor::find_tessdata(const std::string& language) {
  std::vector<std::filesystem::path> roots;
  if (const char* prefix = std::getenv("TESSDATA_PREFIX")) {
    roots.emplace_back(prefix);
    roots.emplace_back(std::filesystem::path(prefix) / "tessdata");
  }
  roots.emplace_back("/usr/share/tesseract-ocr/4.00/tessdata");
  roots.emplace_back("/usr/share/tesseract-ocr/5/tessdata");
  roots.emplace_back("/usr/share/tessdata");
  roots.emplace_back("/usr/local/share/tessdata");
  for (const auto& root : roots) {
    std::error_code ec;
    if (std::filesystem::exists(root / (language + ".traineddata"), ec)) return root.string();
  }
  return std::nullopt;
}

TesseractTextExtractor::TesseractTextExtractor(std::string language, std::string tessdata_dir)
    : impl_(std::make_unique<Impl>()) {
#ifdef GRAPHGRADE_HAVE_OCR
  if (tessdata_dir.empty()) {
    if (auto found = find_tessdata(language)) tessdata_dir = *found;
  }
  if (tessdata_dir.empty()) return;
  try {
    // OEM 3 = default engine, PSM 3 = automatic page segmentation.
    impl_->engine = cv::text::OCRTesseract::create(tessdata_dir.c_str(), language.c_str(),
                                                   nullptr, 3, 3);
    impl_->ready = !impl_->engine.empty();
  } catch (const cv::Exception& e) {
    spdlog::warn("tesseract unavailable: {}", e.what());
  }
#else
  (void)language;
  (void)tessdata_dir;
#endif
}

TesseractTextExtractor::~TesseractTextExtractor() = default;

bool TesseractTextExtractor::available() const { return impl_->ready; }

std::string TesseractTextExtractor::extract(const cv::Mat& image) {
  if (!impl_->ready) throw std::runtime_error("tesseract engine not available");
#ifdef GRAPHGRADE_HAVE_OCR
  cv::Mat gray;
  if (image.channels() == 3) {
    cv::cvtColor(image, gray, cv::COLOR_BGR2GRAY);
  } else {
    gray = image;
  }
  std::string text;
  impl_->engine->run(gray, text);
  return text;
#else
  (void)image;
  return {};
#endif
}

std::string extract_text(const cv::Mat& image, TextExtractor& engine) {
  try {
    return engine.extract(image);
  } catch (const std::exception& e) {
    spdlog::warn("text extraction failed, continuing graph-only: {}", e.what());
    return {};
  }
}

}  // namespace graphgrade
