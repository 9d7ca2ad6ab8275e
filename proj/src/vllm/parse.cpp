#include <cctype>

#include "graphgrade/vllm.hpp"

namespace graphgrade::vllm {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool strip_fence(std::string& text) {
  if (text.rfind("```", 0) == 0 && text.size() >= 6 && text.compare(text.size() - 3, 3, "```") == 0) {
    std::string inner = text.substr(3, text.size() - 6);
    std::size_t lang = 0;
    while (lang < inner.size() && std::isalpha(static_cast<unsigned char>(inner[lang]))) ++lang;
    text = trim(inner.substr(lang));
    return true;
  }
  if (text.size() >= 2 && text.front() == '`' && text.back() == '`') {
    text = trim(text.substr(1, text.size() - 2));
    return true;
  }
  return false;
}

}  // namespace

std::string to_string(ParseError e) {
  switch (e) {
    case ParseError::none: return "ok";
    case ParseError::malformed: return "malformed";
    case ParseError::wrong_length: return "wrong_length";
    case ParseError::non_binary: return "non_binary";
  }
  return "unknown";
}

ParseResult parse_response(const std::string& raw_text, int m) {
  if (m < 1) throw std::invalid_argument("criteria count must be at least 1");
  ParseResult r;
  std::string text = trim(raw_text);
  r.format_violation = strip_fence(text);
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') {
    r.error = ParseError::malformed;
    return r;
  }
  const std::string inner = trim(text.substr(1, text.size() - 2));
  std::vector<std::string> tokens;
  if (!inner.empty()) {
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = inner.find(',', start);
      tokens.push_back(trim(inner.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (static_cast<int>(tokens.size()) != m) {
    r.error = ParseError::wrong_length;
    return r;
  }
  std::vector<int> values;
  for (const auto& t : tokens) {
    if (t != "0" && t != "1") {
      r.error = ParseError::non_binary;
      return r;
    }
    values.push_back(t == "1");
  }
  r.criteria = std::move(values);
  return r;
}

}  // namespace graphgrade::vllm
