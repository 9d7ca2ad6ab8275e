#include "graphgrade/encoder.hpp"

namespace graphgrade::encoder {

using nn::Index;
using nn::Mat;

std::string to_string(Modality modality) {
  switch (modality) {
    case Modality::both: return "both";
    case Modality::graph_only: return "graph_only";
    case Modality::text_only: return "text_only";
  }
  return "both";
}

Modality modality_from_string(const std::string& text) {
  if (text == "both") return Modality::both;
  if (text == "graph_only" || text == "graph") return Modality::graph_only;
  if (text == "text_only" || text == "text") return Modality::text_only;
  throw std::invalid_argument("unknown modality '" + text + "'");
}

std::string to_string(Profile profile) { return profile == Profile::desk ? "desk" : "paper"; }

Profile profile_from_string(const std::string& text) {
  if (text == "desk") return Profile::desk;
  if (text == "paper") return Profile::paper;
  throw std::invalid_argument("unknown encoder profile '" + text + "'");
}

int EncoderConfig::dim() const {
  switch (modality) {
    case Modality::both: return image_dim + text_dim;
    case Modality::graph_only: return image_dim;
    case Modality::text_only: return text_dim;
  }
  return 0;
}

void EncoderConfig::validate() const {
  if (image_dim < 1 || text_dim < 1) throw std::invalid_argument("encoder dims must be positive");
  if (image_encoder != "desk_conv" && image_encoder != "resnet18") {
    throw std::invalid_argument("unknown image encoder '" + image_encoder + "'");
  }
  if (text_encoder != "trigram") throw std::invalid_argument("unknown text encoder '" + text_encoder + "'");
  if (hash_buckets < 1 || max_trigrams < 1) {
    throw std::invalid_argument("hash_buckets and max_trigrams must be positive");
  }
}

EncoderConfig EncoderConfig::desk() {
  EncoderConfig c;
  c.profile = Profile::desk;
  c.image_encoder = "desk_conv";
  c.image_dim = 64;
  c.text_dim = 64;
  return c;
}

EncoderConfig EncoderConfig::paper() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::for_profile(Profile profile) {
  return profile == Profile::desk ? desk() : paper();
}

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"profile", to_string(c.profile)},   {"image_encoder", c.image_encoder},
          {"image_dim", c.image_dim},          {"text_encoder", c.text_encoder},
          {"text_dim", c.text_dim},            {"modality", to_string(c.modality)},
          {"trainable", c.trainable},          {"hash_buckets", c.hash_buckets},
          {"max_trigrams", c.max_trigrams}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c = EncoderConfig::for_profile(profile_from_string(j.value("profile", std::string("paper"))));
  c.image_encoder = j.value("image_encoder", c.image_encoder);
  c.image_dim = j.value("image_dim", c.image_dim);
  c.text_encoder = j.value("text_encoder", c.text_encoder);
  c.text_dim = j.value("text_dim", c.text_dim);
  c.modality = modality_from_string(j.value("modality", to_string(c.modality)));
  c.trainable = j.value("trainable", c.trainable);
  c.hash_buckets = j.value("hash_buckets", c.hash_buckets);
  c.max_trigrams = j.value("max_trigrams", c.max_trigrams);
  c.validate();
  return c;
}

PreparedBatch PreparedBatch::select(const std::vector<int>& indices) const {
  PreparedBatch out;
  out.rows = static_cast<Index>(indices.size());
  if (images.size() > 0) {
    out.images.resize(out.rows, images.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) out.images.row(static_cast<Index>(i)) = images.row(indices[i]);
  }
  if (texts.size() > 0) {
    out.texts.resize(out.rows, texts.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) out.texts.row(static_cast<Index>(i)) = texts.row(indices[i]);
  }
  return out;
}

MultimodalEncoder::MultimodalEncoder(const EncoderConfig& config, nn::ParamStore& store,
                                     std::uint64_t seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  if (config_.uses_graph()) {
    image_ = config_.image_encoder == "desk_conv" ? make_desk_conv_encoder(store, config_.image_dim, rng)
                                                  : make_resnet18_encoder(store, config_.image_dim, rng);
  }
  if (config_.uses_text()) {
    text_ = std::make_unique<TextEncoder>(store, config_.hash_buckets, config_.max_trigrams,
                                          config_.text_dim, rng);
  }
}

Mat MultimodalEncoder::prepare_graph(const GraphImage& graph) const {
  if (!image_) return Mat();
  return image_->prepare(graph);
}

Mat MultimodalEncoder::prepare_text(const std::string& text) const {
  if (!text_) return Mat();
  return text_->prepare(text);
}

PreparedBatch MultimodalEncoder::prepare(const std::vector<EncoderInput>& items) const {
  std::vector<Mat> graphs;
  std::vector<Mat> texts;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (config_.uses_graph()) {
      if (!items[i].graph) {
        throw MissingModality("item " + std::to_string(i) + " has no graph but modality is " +
                              to_string(config_.modality));
      }
      graphs.push_back(image_->prepare(*items[i].graph));
    }
    if (config_.uses_text()) {
      if (!items[i].text) {
        throw MissingModality("item " + std::to_string(i) + " has no text but modality is " +
                              to_string(config_.modality));
      }
      texts.push_back(text_->prepare(*items[i].text));
    }
  }
  std::vector<const Mat*> gp;
  std::vector<const Mat*> tp;
  for (const auto& g : graphs) gp.push_back(&g);
  for (const auto& t : texts) tp.push_back(&t);
  PreparedBatch batch = stack(gp, tp);
  batch.rows = static_cast<Index>(items.size());
  return batch;
}

PreparedBatch MultimodalEncoder::stack(const std::vector<const Mat*>& graphs,
                                       const std::vector<const Mat*>& texts) const {
  PreparedBatch batch;
  if (config_.uses_graph()) {
    batch.images.resize(static_cast<Index>(graphs.size()), image_->input_shape().size());
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      if (graphs[i]->cols() != batch.images.cols()) throw DimensionMismatch("prepared graph row size");
      batch.images.row(static_cast<Index>(i)) = graphs[i]->row(0);
    }
    batch.rows = batch.images.rows();
  }
  if (config_.uses_text()) {
    batch.texts.resize(static_cast<Index>(texts.size()), text_->buckets());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (texts[i]->cols() != batch.texts.cols()) throw DimensionMismatch("prepared text row size");
      batch.texts.row(static_cast<Index>(i)) = texts[i]->row(0);
    }
    if (config_.uses_graph() && batch.texts.rows() != batch.rows) {
      throw std::invalid_argument("graph and text batches differ in length");
    }
    batch.rows = batch.texts.rows();
  }
  return batch;
}

nn::Var MultimodalEncoder::forward(nn::Tape& tape, const PreparedBatch& batch) const {
  if (batch.rows == 0) return tape.constant(Mat(0, dim()));
  nn::FrozenScope frozen(tape, !config_.trainable);
  nn::Var img;
  nn::Var txt;
  if (config_.uses_graph()) {
    if (batch.images.rows() != batch.rows || batch.images.cols() != image_->input_shape().size()) {
      throw MissingModality("batch lacks prepared graphs");
    }
    img = image_->forward(tape, tape.constant(batch.images));
  }
  if (config_.uses_text()) {
    if (batch.texts.rows() != batch.rows || batch.texts.cols() != text_->buckets()) {
      throw MissingModality("batch lacks prepared texts");
    }
    txt = text_->forward(tape, tape.constant(batch.texts));
  }
  if (img.valid() && txt.valid()) return nn::concat_cols(img, txt);
  return img.valid() ? img : txt;
}

Mat MultimodalEncoder::embed_prepared(const PreparedBatch& batch) const {
  constexpr Index kChunk = 32;
  Mat out(batch.rows, dim());
  for (Index start = 0; start < batch.rows; start += kChunk) {
    const Index n = std::min(kChunk, batch.rows - start);
    std::vector<int> idx;
    for (Index i = 0; i < n; ++i) idx.push_back(static_cast<int>(start + i));
    nn::Tape tape;
    nn::FrozenScope frozen(tape, true);
    out.middleRows(start, n) = forward(tape, batch.select(idx)).value();
  }
  return out;
}

Eigen::RowVectorXd MultimodalEncoder::embed(const EncoderInput& item) const {
  return embed_batch({item}).row(0);
}

Mat MultimodalEncoder::embed_batch(const std::vector<EncoderInput>& items) const {
  return embed_prepared(prepare(items));
}

}  // namespace graphgrade::encoder
