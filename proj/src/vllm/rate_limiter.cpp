#include <thread>

#include "graphgrade/vllm.hpp"

namespace graphgrade::vllm {

using nlohmann::json;

double SystemClock::now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

void SystemClock::sleep_until(double t) {
  const double wait = t - now();
  if (wait > 0) std::this_thread::sleep_for(std::chrono::duration<double>(wait));
}

double VirtualClock::now() {
  std::lock_guard lock(mutex_);
  return now_;
}

void VirtualClock::sleep_until(double t) {
  std::lock_guard lock(mutex_);
  now_ = std::max(now_, t);
}

void VirtualClock::advance(double seconds) {
  std::lock_guard lock(mutex_);
  now_ += seconds;
}

RateLimiter::RateLimiter(int requests_per_minute, Clock& clock) : rpm_(requests_per_minute), clock_(clock) {
  if (rpm_ < 0) throw std::invalid_argument("requests per minute must be non-negative");
}

void RateLimiter::acquire() {
  std::lock_guard lock(mutex_);
  while (true) {
    const double t = clock_.now();
    while (!window_.empty() && window_.front() + 60.0 <= t) window_.pop_front();
    if (rpm_ == 0 || static_cast<int>(window_.size()) < rpm_) {
      if (rpm_ > 0) window_.push_back(t);
      grants_.push_back(t);
      return;
    }
    clock_.sleep_until(window_.front() + 60.0);
  }
}

std::vector<double> RateLimiter::grants() const {
  std::lock_guard lock(mutex_);
  return grants_;
}

json to_json(const TranscriptRecord& r) {
  json j = {{"query_id", r.query_id},
            {"attempt", r.attempt},
            {"bundle_hash", r.bundle_hash},
            {"raw_reply", r.raw_reply},
            {"parsed", r.parsed ? json(*r.parsed) : json(nullptr)},
            {"outcome", r.transport_error ? std::string("transport_error") : to_string(r.error)},
            {"format_violation", r.format_violation}};
  if (r.transport_error) j["transport_error"] = *r.transport_error;
  return j;
}

Transcript::Transcript(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
  if (!*out_) throw std::runtime_error("cannot open transcript " + path.string());
}

void Transcript::append(const TranscriptRecord& record) {
  std::lock_guard lock(mutex_);
  records_.push_back(record);
  if (out_) {
    *out_ << to_json(record).dump() << '\n';
    out_->flush();
  }
}

std::vector<TranscriptRecord> Transcript::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

GradingResponse grade_query(Provider& provider, const PromptBundle& bundle, int m, const ProviderConfig& config,
                            RateLimiter* limiter, Transcript* transcript, const std::string& query_id) {
  const int allowed = 1 + config.max_retries;
  const std::string hash = transcript ? bundle.hash() : std::string();
  GradingResponse resp;
  for (int attempt = 1; attempt <= allowed; ++attempt) {
    if (limiter) limiter->acquire();
    resp.attempts = attempt;
    std::string raw;
    try {
      raw = provider.complete({bundle, m, query_id, attempt});
    } catch (const ProviderError& e) {
      if (transcript) {
        TranscriptRecord rec{query_id, attempt, hash, {}, std::nullopt, ParseError::none, false, e.what()};
        transcript->append(rec);
      }
      if (attempt == allowed) throw;
      continue;
    }
    const ParseResult parsed = parse_response(raw, m);
    if (transcript) {
      transcript->append({query_id, attempt, hash, raw, parsed.criteria, parsed.error, parsed.format_violation, {}});
    }
    resp.raw_text = raw;
    resp.format_violation = parsed.format_violation;
    resp.failure = parsed.error;
    if (parsed.ok()) {
      resp.criteria = parsed.criteria;
      resp.grade = encode_grade(*parsed.criteria);
      return resp;
    }
  }
  return resp;
}

}  // namespace graphgrade::vllm
