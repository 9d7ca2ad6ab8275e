#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace graphgrade::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns parameters; addresses stay stable for the lifetime of the store.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter& add(std::string name, Mat init);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> with_prefix(std::string_view prefix);

  void zero_grad();
  std::size_t scalar_count() const;

  std::vector<Mat> snapshot() const;
  void restore(const std::vector<Mat>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  const Mat& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Nodes that depend on no parameter skip gradient work.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& grad)>;

  Var constant(Mat value);
  /// A parameter leaf; a plain constant while parameter tracking is off.
  Var param(Parameter& p);
  Var record(Mat value, std::initializer_list<Var> inputs, Backward backward);

  /// Seeds d(loss)/d(loss) = 1 and accumulates into Parameter::grad.
  void backward(const Var& loss);
  /// Same with an explicit seed of the output's shape.
  void backward(const Var& output, const Mat& seed);

  void accumulate(const Var& v, const Mat& grad);
  bool requires_grad(const Var& v) const;
  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t size() const { return nodes_.size(); }

  bool tracking_params() const { return tracking_; }
  void set_tracking_params(bool on) { tracking_ = on; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    Parameter* sink = nullptr;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
  bool tracking_ = true;
};

/// Turns parameter tracking off for a scope.
class FrozenScope {
 public:
  FrozenScope(Tape& tape, bool frozen) : tape_(tape), previous_(tape.tracking_params()) {
    if (frozen) tape_.set_tracking_params(false);
  }
  ~FrozenScope() { tape_.set_tracking_params(previous_); }
  FrozenScope(const FrozenScope&) = delete;
  FrozenScope& operator=(const FrozenScope&) = delete;

 private:
  Tape& tape_;
  bool previous_;
};

struct Shape3 {
  Index c = 1;
  Index h = 1;
  Index w = 1;
  Index size() const { return c * h * w; }
};

// Dense ops.
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);
Var reshape(const Var& a, Index rows, Index cols);  // row-major order is kept
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_bias(const Var& a, const Var& row);  // row broadcast over rows of a
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);  // clamped to the open interval (0, 1)
Var sqrt_eps(const Var& a, double eps);
Var sum_all(const Var& a);
Var sum_product(const Var& a, const Mat& weights);  // sum(a .* weights)
Var concat_cols(const Var& a, const Var& b);
Var select_rows(const Var& a, const std::vector<int>& rows);
Var group_reduce(const Var& a, const std::vector<int>& labels, int groups, bool mean);
Var row_sq_norm(const Var& a);             // rows x 1
Var sq_dist(const Var& a, const Var& b);   // |a_i - b_j|^2, rows(a) x rows(b)
Var log_softmax(const Var& a);             // per row
Var class_log_probs(const Var& logits, const std::vector<int>& column_labels, int classes);
Var nll(const Var& log_probs, const std::vector<int>& targets);  // mean over rows
Var mse(const Var& a, const Mat& target);                          // mean over entries

// Image ops on batches stored as rows of CHW-flattened samples.
Var conv2d(const Var& x, const Shape3& in, const Var& weight, const Var& bias, Index kernel,
           Index stride, Index pad);
Var avgpool2(const Var& x, const Shape3& in);
Var maxpool(const Var& x, const Shape3& in, Index kernel, Index stride, Index pad);
Var global_avgpool(const Var& x, const Shape3& in);
Var channel_affine(const Var& x, const Shape3& in, const Var& scale, const Var& shift);

Index conv_out(Index size, Index kernel, Index stride, Index pad);

// Layers.
struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out

  static Linear create(ParamStore& store, const std::string& name, Index in, Index out,
                       std::mt19937_64& rng);
  Var operator()(Tape& tape, const Var& x) const;
};

struct Conv2d {
  Parameter* weight = nullptr;  // out x (in * k * k)
  Parameter* bias = nullptr;    // 1 x out
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 3;
  Index stride = 1;
  Index pad = 1;

  static Conv2d create(ParamStore& store, const std::string& name, Index in, Index out, Index kernel,
                       Index stride, Index pad, bool with_bias, std::mt19937_64& rng);
  Var operator()(Tape& tape, const Var& x, const Shape3& in) const;
  Shape3 out_shape(const Shape3& in) const;
};

/// Inference-time batch norm folded into a per-channel scale and shift.
struct ChannelAffine {
  Parameter* scale = nullptr;
  Parameter* shift = nullptr;

  static ChannelAffine create(ParamStore& store, const std::string& name, Index channels);
  Var operator()(Tape& tape, const Var& x, const Shape3& in) const;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);
  void step();
  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long t_ = 0;
};

/// theta <- theta - lr * grad for each parameter.
void sgd_step(const std::vector<Parameter*>& params, double lr);

}  // namespace graphgrade::nn
