#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphgrade/nn.hpp"
#include "graphgrade/preprocess.hpp"

namespace graphgrade::encoder {

enum class Modality { both, graph_only, text_only };
enum class Profile { desk, paper };

std::string to_string(Modality modality);
Modality modality_from_string(const std::string& text);
std::string to_string(Profile profile);
Profile profile_from_string(const std::string& text);

struct EncoderConfig {
  Profile profile = Profile::paper;
  std::string image_encoder = "resnet18";
  int image_dim = 512;
  std::string text_encoder = "trigram";
  int text_dim = 768;
  Modality modality = Modality::both;
  bool trainable = true;
  int hash_buckets = 1024;
  int max_trigrams = 128;

  int dim() const;
  bool uses_graph() const { return modality != Modality::text_only; }
  bool uses_text() const { return modality != Modality::graph_only; }
  void validate() const;

  static EncoderConfig desk();
  static EncoderConfig paper();
  static EncoderConfig for_profile(Profile profile);

  bool operator==(const EncoderConfig&) const = default;
};

nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

class MissingModality : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An absent field is an absent modality; an empty text is present.
struct EncoderInput {
  std::optional<GraphImage> graph;
  std::optional<std::string> text;
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual int dim() const = 0;
  virtual nn::Shape3 input_shape() const = 0;
  /// One row of input_shape().size() values.
  virtual nn::Mat prepare(const GraphImage& graph) const = 0;
  virtual nn::Var forward(nn::Tape& tape, const nn::Var& batch) const = 0;
};

/// Four conv3x3/ReLU/avgpool2 blocks (8, 16, 32, 64 channels) on a 64x64 ink map, then a linear map.
std::unique_ptr<ImageEncoder> make_desk_conv_encoder(nn::ParamStore& store, int dim,
                                                     std::mt19937_64& rng);
/// 18-layer residual network on the full 224x224 crop; batch norm is folded into channel affines.
std::unique_ptr<ImageEncoder> make_resnet18_encoder(nn::ParamStore& store, int dim,
                                                    std::mt19937_64& rng);

/// Hashed character-trigram counts, L2-normalized; the first `max_trigrams` positions only.
nn::Mat trigram_features(const std::string& text, int buckets, int max_trigrams);

class TextEncoder {
 public:
  TextEncoder(nn::ParamStore& store, int buckets, int max_trigrams, int dim, std::mt19937_64& rng);
  int dim() const { return dim_; }
  int buckets() const { return buckets_; }
  nn::Mat prepare(const std::string& text) const;
  nn::Var forward(nn::Tape& tape, const nn::Var& batch) const;

 private:
  int buckets_;
  int max_trigrams_;
  int dim_;
  nn::Linear projection_;
};

struct PreparedBatch {
  nn::Mat images;  // rows x image input size, or empty
  nn::Mat texts;   // rows x hash buckets, or empty
  nn::Index rows = 0;

  PreparedBatch select(const std::vector<int>& indices) const;
};

/// g_theta: image embedding and text embedding concatenated in that order.
class MultimodalEncoder {
 public:
  MultimodalEncoder(const EncoderConfig& config, nn::ParamStore& store, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  int dim() const { return config_.dim(); }

  nn::Mat prepare_graph(const GraphImage& graph) const;
  nn::Mat prepare_text(const std::string& text) const;
  PreparedBatch prepare(const std::vector<EncoderInput>& items) const;
  /// Stacks prepared rows; rows must come from this encoder.
  PreparedBatch stack(const std::vector<const nn::Mat*>& graphs,
                      const std::vector<const nn::Mat*>& texts) const;

  /// Gradients reach encoder parameters only when the config is trainable.
  nn::Var forward(nn::Tape& tape, const PreparedBatch& batch) const;

  nn::Mat embed_prepared(const PreparedBatch& batch) const;
  Eigen::RowVectorXd embed(const EncoderInput& item) const;
  nn::Mat embed_batch(const std::vector<EncoderInput>& items) const;

 private:
  EncoderConfig config_;
  std::unique_ptr<ImageEncoder> image_;
  std::unique_ptr<TextEncoder> text_;
};

}  // namespace graphgrade::encoder
