#include <opencv2/imgproc.hpp>

#include "graphgrade/encoder.hpp"

namespace graphgrade::encoder {

using nn::Index;
using nn::Mat;
using nn::Shape3;
using nn::Tape;
using nn::Var;

namespace {

/// 1 - intensity, so ink is high and paper is zero. Channel-major layout.
Mat ink_row(const GraphImage& graph, int size) {
  cv::Mat resized;
  if (size == kGraphSize) {
    resized = graph.pixels();
  } else {
    cv::resize(graph.pixels(), resized, cv::Size(size, size), 0, 0, cv::INTER_AREA);
  }
  Mat row(1, 3 * size * size);
  const Index plane = static_cast<Index>(size) * size;
  for (int y = 0; y < size; ++y) {
    const auto* px = resized.ptr<cv::Vec3b>(y);
    for (int x = 0; x < size; ++x) {
      const Index at = static_cast<Index>(y) * size + x;
      for (int c = 0; c < 3; ++c) row(0, c * plane + at) = 1.0 - px[x][c] / 255.0;
    }
  }
  return row;
}

class DeskConvEncoder final : public ImageEncoder {
 public:
  static constexpr int kInput = 64;

  DeskConvEncoder(nn::ParamStore& store, int dim, std::mt19937_64& rng) : dim_(dim) {
    const Index channels[] = {3, 8, 16, 32, 64};
    for (int i = 0; i < 4; ++i) {
      convs_.push_back(nn::Conv2d::create(store, "encoder.image.conv" + std::to_string(i + 1),
                                          channels[i], channels[i + 1], 3, 1, 1, true, rng));
    }
    const Index flat = 64 * (kInput / 16) * (kInput / 16);
    head_ = nn::Linear::create(store, "encoder.image.fc", flat, dim, rng);
  }

  int dim() const override { return dim_; }
  Shape3 input_shape() const override { return {3, kInput, kInput}; }
  Mat prepare(const GraphImage& graph) const override { return ink_row(graph, kInput); }

  Var forward(Tape& tape, const Var& batch) const override {
    Shape3 shape = input_shape();
    Var h = batch;
    for (const auto& conv : convs_) {
      h = nn::relu(conv(tape, h, shape));
      shape = conv.out_shape(shape);
      h = nn::avgpool2(h, shape);
      shape = {shape.c, shape.h / 2, shape.w / 2};
    }
    return head_(tape, h);
  }

 private:
  int dim_;
  std::vector<nn::Conv2d> convs_;
  nn::Linear head_;
};

struct BasicBlock {
  nn::Conv2d conv1;
  nn::ChannelAffine bn1;
  nn::Conv2d conv2;
  nn::ChannelAffine bn2;
  std::optional<nn::Conv2d> down;
  std::optional<nn::ChannelAffine> down_bn;
};

class ResNet18Encoder final : public ImageEncoder {
 public:
  ResNet18Encoder(nn::ParamStore& store, int dim, std::mt19937_64& rng) : dim_(dim) {
    const std::string p = "encoder.image.";
    stem_ = nn::Conv2d::create(store, p + "conv1", 3, 64, 7, 2, 3, false, rng);
    stem_bn_ = nn::ChannelAffine::create(store, p + "bn1", 64);
    Index in = 64;
    const Index widths[] = {64, 128, 256, 512};
    for (int stage = 0; stage < 4; ++stage) {
      for (int b = 0; b < 2; ++b) {
        const std::string name = p + "layer" + std::to_string(stage + 1) + "." + std::to_string(b) + ".";
        const Index out = widths[stage];
        const Index stride = (stage > 0 && b == 0) ? 2 : 1;
        BasicBlock block{nn::Conv2d::create(store, name + "conv1", in, out, 3, stride, 1, false, rng),
                         nn::ChannelAffine::create(store, name + "bn1", out),
                         nn::Conv2d::create(store, name + "conv2", out, out, 3, 1, 1, false, rng),
                         nn::ChannelAffine::create(store, name + "bn2", out),
                         std::nullopt,
                         std::nullopt};
        // Zero-initialized residual branch scale keeps the untrained output scale bounded.
        block.bn2.scale->value.setZero();
        if (stride != 1 || in != out) {
          block.down = nn::Conv2d::create(store, name + "downsample", in, out, 1, stride, 0, false, rng);
          block.down_bn = nn::ChannelAffine::create(store, name + "downsample_bn", out);
        }
        blocks_.push_back(std::move(block));
        in = out;
      }
    }
    if (dim != 512) projection_ = nn::Linear::create(store, p + "projection", 512, dim, rng);
  }

  int dim() const override { return dim_; }
  Shape3 input_shape() const override { return {3, kGraphSize, kGraphSize}; }
  Mat prepare(const GraphImage& graph) const override { return ink_row(graph, kGraphSize); }

  Var forward(Tape& tape, const Var& batch) const override {
    Shape3 shape = input_shape();
    Var h = stem_(tape, batch, shape);
    shape = stem_.out_shape(shape);
    h = nn::relu(stem_bn_(tape, h, shape));
    h = nn::maxpool(h, shape, 3, 2, 1);
    shape = {shape.c, nn::conv_out(shape.h, 3, 2, 1), nn::conv_out(shape.w, 3, 2, 1)};
    for (const auto& block : blocks_) {
      const Shape3 out_shape = block.conv1.out_shape(shape);
      Var y = nn::relu(block.bn1(tape, block.conv1(tape, h, shape), out_shape));
      y = block.bn2(tape, block.conv2(tape, y, out_shape), out_shape);
      Var skip = h;
      if (block.down) skip = (*block.down_bn)(tape, (*block.down)(tape, h, shape), out_shape);
      h = nn::relu(nn::add(y, skip));
      shape = out_shape;
    }
    h = nn::global_avgpool(h, shape);
    if (projection_) h = (*projection_)(tape, h);
    return h;
  }

 private:
  int dim_;
  nn::Conv2d stem_;
  nn::ChannelAffine stem_bn_;
  std::vector<BasicBlock> blocks_;
  std::optional<nn::Linear> projection_;
};

}  // namespace

std::unique_ptr<ImageEncoder> make_desk_conv_encoder(nn::ParamStore& store, int dim,
                                                     std::mt19937_64& rng) {
  return std::make_unique<DeskConvEncoder>(store, dim, rng);
}

std::unique_ptr<ImageEncoder> make_resnet18_encoder(nn::ParamStore& store, int dim,
                                                    std::mt19937_64& rng) {
  return std::make_unique<ResNet18Encoder>(store, dim, rng);
}

}  // namespace graphgrade::encoder
