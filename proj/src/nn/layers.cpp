#include <cmath>
#include <stdexcept>

#include "graphgrade/nn.hpp"

namespace graphgrade::nn {

Parameter& ParamStore::add(std::string name, Mat init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = std::move(init);
  p->zero_grad();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamStore::at(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParamStore::at(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
}

bool ParamStore::contains(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return true;
  }
  return false;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParamStore::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (std::string_view(p->name).substr(0, prefix.size()) == prefix) out.push_back(p.get());
  }
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

std::vector<Mat> ParamStore::snapshot() const {
  std::vector<Mat> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParamStore::restore(const std::vector<Mat>& values) {
  if (values.size() != params_.size()) throw std::invalid_argument("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].rows() != params_[i]->value.rows() || values[i].cols() != params_[i]->value.cols()) {
      throw std::invalid_argument("restore: shape mismatch for '" + params_[i]->name + "'");
    }
    params_[i]->value = values[i];
  }
}

namespace {

Mat he_normal(Index rows, Index cols, double fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

Linear Linear::create(ParamStore& store, const std::string& name, Index in, Index out,
                      std::mt19937_64& rng) {
  Linear l;
  l.weight = &store.add(name + ".weight", he_normal(in, out, static_cast<double>(in), rng));
  l.bias = &store.add(name + ".bias", Mat::Zero(1, out));
  return l;
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  return add_bias(matmul(x, tape.param(*weight)), tape.param(*bias));
}

Conv2d Conv2d::create(ParamStore& store, const std::string& name, Index in, Index out, Index kernel,
                      Index stride, Index pad, bool with_bias, std::mt19937_64& rng) {
  Conv2d c;
  c.in_channels = in;
  c.out_channels = out;
  c.kernel = kernel;
  c.stride = stride;
  c.pad = pad;
  const Index fan_in = in * kernel * kernel;
  c.weight = &store.add(name + ".weight", he_normal(out, fan_in, static_cast<double>(fan_in), rng));
  if (with_bias) c.bias = &store.add(name + ".bias", Mat::Zero(1, out));
  return c;
}

Var Conv2d::operator()(Tape& tape, const Var& x, const Shape3& in) const {
  if (in.c != in_channels) throw std::invalid_argument("conv: channel mismatch");
  const Var b = bias != nullptr ? tape.param(*bias) : Var();
  return conv2d(x, in, tape.param(*weight), b, kernel, stride, pad);
}

Shape3 Conv2d::out_shape(const Shape3& in) const {
  return {out_channels, conv_out(in.h, kernel, stride, pad), conv_out(in.w, kernel, stride, pad)};
}

ChannelAffine ChannelAffine::create(ParamStore& store, const std::string& name, Index channels) {
  ChannelAffine a;
  a.scale = &store.add(name + ".scale", Mat::Ones(1, channels));
  a.shift = &store.add(name + ".shift", Mat::Zero(1, channels));
  return a;
}

Var ChannelAffine::operator()(Tape& tape, const Var& x, const Shape3& in) const {
  return channel_affine(x, in, tape.param(*scale), tape.param(*shift));
}

}  // namespace graphgrade::nn
