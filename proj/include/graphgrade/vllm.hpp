#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "graphgrade/dataset.hpp"
#include "graphgrade/episodes.hpp"
#include "graphgrade/report.hpp"

namespace graphgrade::vllm {

std::string base64_encode(std::string_view bytes);
std::string sha256_hex(std::string_view bytes);

struct ImagePayload {
  std::string media_type = "image/png";
  std::string base64;

  std::string data_url() const { return "data:" + media_type + ";base64," + base64; }
  bool operator==(const ImagePayload&) const = default;
};

ImagePayload load_image_payload(const std::filesystem::path& path);

struct FewShotPair {
  ImagePayload image;
  std::string reply;  // canonical bracketed list, e.g. "[0,1]"

  bool operator==(const FewShotPair&) const = default;
};

struct PromptBundle {
  std::string system_text;
  std::string task_description;
  std::vector<std::string> criteria;
  std::vector<FewShotPair> few_shot_pairs;
  ImagePayload query_image;

  /// Chat-completions message list: system, (user image, assistant reply)*, user query image.
  nlohmann::json messages() const;
  std::string hash() const;
  bool operator==(const PromptBundle&) const = default;
};

struct SupportExample {
  std::string submission_id;
  ImagePayload image;
  std::optional<std::vector<int>> criteria;  // absent when the item is not annotated
};

class PromptError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Canonical reply: "[1,0,1]".
std::string format_reply(const std::vector<int>& criteria);

std::string system_text();
PromptBundle build_prompt(const Rubric& rubric, const std::vector<SupportExample>& support,
                          const ImagePayload& query);

enum class ParseError { none, malformed, wrong_length, non_binary };
std::string to_string(ParseError e);

struct ParseResult {
  std::optional<std::vector<int>> criteria;
  ParseError error = ParseError::none;
  bool format_violation = false;

  bool ok() const { return criteria.has_value(); }
};

ParseResult parse_response(const std::string& raw_text, int m);

struct GradingResponse {
  std::string raw_text;
  std::optional<std::vector<int>> criteria;
  std::optional<int> grade;
  ParseError failure = ParseError::none;
  int attempts = 0;
  bool format_violation = false;

  bool ok() const { return grade.has_value(); }
};

/// Transport-level failure (connection, HTTP status, unexpected payload).
class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ProviderKind { mock, endpoint };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::mock;
  std::string model = "mock";
  std::string endpoint;  // full chat-completions URL for the endpoint kind
  double temperature = 0.1;
  bool supports_temperature = true;
  int max_retries = 2;
  int requests_per_minute = 0;  // 0 disables rate limiting
  std::string api_key_env = "GRADER_API_KEY";
  int timeout_seconds = 120;

  void validate() const;
};

struct GradeRequest {
  const PromptBundle& bundle;
  int m = 1;
  std::string query_id;  // visible to mocks only; never sent to an endpoint
  int attempt = 1;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string complete(const GradeRequest& request) = 0;
};

enum class MockMode { oracle, uniform_random, always_malformed, scripted };
MockMode mock_mode_from_string(const std::string& text);

class MockProvider : public Provider {
 public:
  /// Oracle replies with the annotated criteria of the query submission.
  static std::unique_ptr<MockProvider> oracle(const DatasetManifest& manifest);
  /// Each reply is drawn from a stream keyed by (seed, bundle hash, attempt).
  static std::unique_ptr<MockProvider> uniform_random(std::uint64_t seed);
  static std::unique_ptr<MockProvider> always_malformed();
  /// Replies are consumed in order; the last one repeats.
  static std::unique_ptr<MockProvider> scripted(std::vector<std::string> replies);

  std::string complete(const GradeRequest& request) override;
  MockMode mode() const { return mode_; }
  int calls() const;

 private:
  explicit MockProvider(MockMode mode) : mode_(mode) {}
  MockMode mode_;
  std::uint64_t seed_ = 0;
  std::unordered_map<std::string, std::vector<int>> truth_;
  std::vector<std::string> script_;
  mutable std::mutex mutex_;
  int calls_ = 0;
};

/// Chat-completions HTTP client. The API key is read from the configured environment variable.
class EndpointProvider : public Provider {
 public:
  explicit EndpointProvider(ProviderConfig config);
  std::string complete(const GradeRequest& request) override;
  nlohmann::json request_body(const PromptBundle& bundle) const;

 private:
  ProviderConfig config_;
  std::string scheme_host_;
  std::string path_;
  std::string api_key_;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;  // seconds
  virtual void sleep_until(double t) = 0;
};

class SystemClock : public Clock {
 public:
  double now() override;
  void sleep_until(double t) override;

 private:
  const std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Time advances only through sleep_until and advance.
class VirtualClock : public Clock {
 public:
  double now() override;
  void sleep_until(double t) override;
  void advance(double seconds);

 private:
  std::mutex mutex_;
  double now_ = 0.0;
};

/// Sliding 60-second window: at most `requests_per_minute` grants in any window.
class RateLimiter {
 public:
  RateLimiter(int requests_per_minute, Clock& clock);
  void acquire();
  std::vector<double> grants() const;
  int requests_per_minute() const { return rpm_; }

 private:
  int rpm_;
  Clock& clock_;
  mutable std::mutex mutex_;
  std::deque<double> window_;
  std::vector<double> grants_;
};

/// One record per provider request.
struct TranscriptRecord {
  std::string query_id;
  int attempt = 0;
  std::string bundle_hash;
  std::string raw_reply;
  std::optional<std::vector<int>> parsed;
  ParseError error = ParseError::none;
  bool format_violation = false;
  std::optional<std::string> transport_error;
};

nlohmann::json to_json(const TranscriptRecord& record);

class Transcript {
 public:
  Transcript() = default;
  explicit Transcript(const std::filesystem::path& path);
  void append(const TranscriptRecord& record);
  std::vector<TranscriptRecord> records() const;

 private:
  mutable std::mutex mutex_;
  std::vector<TranscriptRecord> records_;
  std::unique_ptr<std::ofstream> out_;
};

/// One query per call; parse failures are retried up to max_retries, transport failures likewise
/// before a ProviderError escapes.
GradingResponse grade_query(Provider& provider, const PromptBundle& bundle, int m, const ProviderConfig& config,
                            RateLimiter* limiter = nullptr, Transcript* transcript = nullptr,
                            const std::string& query_id = {});

struct VllmEvalOptions {
  int concurrency = 4;
  std::optional<episodes::SplitConfig> split;  // evaluate on the held-out side of this split
  std::optional<std::filesystem::path> transcript;
};

report::EvalResult evaluate_vllm(Provider& provider, const ProviderConfig& config, const DatasetManifest& manifest,
                                 const std::filesystem::path& dataset_root, const episodes::EpisodeSpec& spec,
                                 int n_episodes, std::uint64_t seed, const VllmEvalOptions& options = {},
                                 Clock* clock = nullptr);

}  // namespace graphgrade::vllm
