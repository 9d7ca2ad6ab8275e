#include <cctype>

#include "graphgrade/encoder.hpp"
#include "graphgrade/random.hpp"

namespace graphgrade::encoder {

nn::Mat trigram_features(const std::string& text, int buckets, int max_trigrams) {
  if (buckets < 1) throw std::invalid_argument("hash buckets must be positive");
  nn::Mat row = nn::Mat::Zero(1, buckets);
  // Lowercase ASCII, collapse whitespace runs, pad with one space on each side.
  std::string norm = " ";
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (norm.back() != ' ') norm.push_back(' ');
    } else {
      norm.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (norm.back() != ' ') norm.push_back(' ');
  if (norm.size() < 3) return row;
  const std::size_t positions = std::min(norm.size() - 2, static_cast<std::size_t>(max_trigrams));
  for (std::size_t i = 0; i < positions; ++i) {
    const std::uint64_t h = fnv1a(std::string_view(norm).substr(i, 3));
    row(0, static_cast<nn::Index>(h % static_cast<std::uint64_t>(buckets))) += 1.0;
  }
  const double norm2 = row.norm();
  if (norm2 > 0.0) row /= norm2;
  return row;
}

TextEncoder::TextEncoder(nn::ParamStore& store, int buckets, int max_trigrams, int dim,
                         std::mt19937_64& rng)
    : buckets_(buckets),
      max_trigrams_(max_trigrams),
      dim_(dim),
      projection_(nn::Linear::create(store, "encoder.text.projection", buckets, dim, rng)) {}

nn::Mat TextEncoder::prepare(const std::string& text) const {
  return trigram_features(text, buckets_, max_trigrams_);
}

nn::Var TextEncoder::forward(nn::Tape& tape, const nn::Var& batch) const {
  return projection_(tape, batch);
}

}  // namespace graphgrade::encoder
