#include <cstdlib>
#include <regex>

#include "graphgrade/random.hpp"
#include "graphgrade/vllm.hpp"

#include <httplib.h>

namespace graphgrade::vllm {

using nlohmann::json;

void ProviderConfig::validate() const {
  if (max_retries < 0) throw std::invalid_argument("max_retries must be non-negative");
  if (requests_per_minute < 0) throw std::invalid_argument("requests_per_minute must be non-negative");
  if (temperature < 0.0) throw std::invalid_argument("temperature must be non-negative");
  if (kind == ProviderKind::endpoint && endpoint.empty()) throw std::invalid_argument("endpoint URL is required");
}

MockMode mock_mode_from_string(const std::string& text) {
  if (text == "oracle") return MockMode::oracle;
  if (text == "uniform_random" || text == "random") return MockMode::uniform_random;
  if (text == "always_malformed" || text == "malformed") return MockMode::always_malformed;
  if (text == "scripted") return MockMode::scripted;
  throw std::invalid_argument("unknown mock mode '" + text + "'");
}

std::unique_ptr<MockProvider> MockProvider::oracle(const DatasetManifest& manifest) {
  std::unique_ptr<MockProvider> p(new MockProvider(MockMode::oracle));
  for (const auto& module : manifest.modules) {
    for (const auto& assignment : module.assignments) {
      for (const auto& a : assignment.annotations) p->truth_[a.submission_id] = a.criteria_vector;
    }
  }
  return p;
}

std::unique_ptr<MockProvider> MockProvider::uniform_random(std::uint64_t seed) {
  std::unique_ptr<MockProvider> p(new MockProvider(MockMode::uniform_random));
  p->seed_ = seed;
  return p;
}

std::unique_ptr<MockProvider> MockProvider::always_malformed() {
  return std::unique_ptr<MockProvider>(new MockProvider(MockMode::always_malformed));
}

std::unique_ptr<MockProvider> MockProvider::scripted(std::vector<std::string> replies) {
  if (replies.empty()) throw std::invalid_argument("scripted mock needs at least one reply");
  std::unique_ptr<MockProvider> p(new MockProvider(MockMode::scripted));
  p->script_ = std::move(replies);
  return p;
}

int MockProvider::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::string MockProvider::complete(const GradeRequest& request) {
  int call = 0;
  {
    std::lock_guard lock(mutex_);
    call = calls_++;
  }
  switch (mode_) {
    case MockMode::oracle: {
      auto it = truth_.find(request.query_id);
      if (it == truth_.end()) throw ProviderError("oracle has no annotation for '" + request.query_id + "'");
      return format_reply(it->second);
    }
    case MockMode::uniform_random: {
      const std::uint64_t key = fnv1a(request.bundle.hash() + "#" + std::to_string(request.attempt));
      std::uint64_t state = derive_seed(seed_, key);
      std::vector<int> v;
      for (int i = 0; i < request.m; ++i) {
        state = mix64(state);
        v.push_back(static_cast<int>(state >> 63));
      }
      return format_reply(v);
    }
    case MockMode::always_malformed:
      return "The graph shows a supply curve shifting to the left, so most criteria look fulfilled.";
    case MockMode::scripted:
      return script_[std::min(static_cast<std::size_t>(call), script_.size() - 1)];
  }
  throw std::logic_error("unknown mock mode");
}

EndpointProvider::EndpointProvider(ProviderConfig config) : config_(std::move(config)) {
  config_.validate();
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url)) {
    throw std::invalid_argument("endpoint must be an http(s) URL: " + config_.endpoint);
  }
  scheme_host_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

json EndpointProvider::request_body(const PromptBundle& bundle) const {
  json body = {{"model", config_.model}, {"messages", bundle.messages()}};
  if (config_.supports_temperature) body["temperature"] = config_.temperature;
  return body;
}

std::string EndpointProvider::complete(const GradeRequest& request) {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  client.set_write_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(path_, headers, request_body(request.bundle).dump(), "application/json");
  if (!res) throw ProviderError("request to " + scheme_host_ + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw ProviderError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  json doc = json::parse(res->body, nullptr, false);
  if (doc.is_discarded()) throw ProviderError("endpoint reply is not JSON");
  try {
    const json& content = doc.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    std::string text;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  } catch (const json::exception&) {
    throw ProviderError("endpoint reply has no message content");
  }
}

}  // namespace graphgrade::vllm
