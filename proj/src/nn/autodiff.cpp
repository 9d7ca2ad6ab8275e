#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "graphgrade/nn.hpp"

namespace graphgrade::nn {

const Mat& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  if (!tracking_) return constant(p.value);
  if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Mat value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw std::logic_error("Var belongs to another tape");
    needs = needs || nodes_[static_cast<std::size_t>(v.id())].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

bool Tape::requires_grad(const Var& v) const {
  return nodes_[static_cast<std::size_t>(v.id())].requires_grad;
}

void Tape::accumulate(const Var& v, const Mat& grad) {
  Node& node = nodes_[static_cast<std::size_t>(v.id())];
  if (!node.requires_grad) return;
  assert(grad.rows() == node.value.rows() && grad.cols() == node.value.cols());
  if (node.grad.size() == 0) {
    node.grad = grad;
  } else {
    node.grad += grad;
  }
}

void Tape::backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw std::logic_error("backward needs a scalar loss");
  backward(loss, Mat::Ones(1, 1));
}

void Tape::backward(const Var& output, const Mat& seed) {
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!requires_grad(output)) return;
  accumulate(output, seed);
  for (int id = output.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.sink != nullptr) node.sink->grad += node.grad;
    if (node.backward) {
      const Mat grad = std::move(node.grad);
      node.backward(*this, grad);
    }
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape& t = *a.tape();
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& tape, const Mat& g) {
    if (tape.requires_grad(a)) tape.accumulate(a, g * b.value().transpose());
    if (tape.requires_grad(b)) tape.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: dimension mismatch");
  Tape& t = *a.tape();
  return t.record(a.value() * b.value().transpose(), {a, b}, [a, b](Tape& tape, const Mat& g) {
    if (tape.requires_grad(a)) tape.accumulate(a, g * b.value());
    if (tape.requires_grad(b)) tape.accumulate(b, g.transpose() * a.value());
  });
}

Var transpose(const Var& a) {
  Tape& t = *a.tape();
  return t.record(a.value().transpose(), {a},
                  [a](Tape& tape, const Mat& g) { tape.accumulate(a, g.transpose()); });
}

Var reshape(const Var& a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw std::invalid_argument("reshape: size mismatch");
  Tape& t = *a.tape();
  Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return t.record(std::move(out), {a}, [a](Tape& tape, const Mat& g) {
    tape.accumulate(a, Eigen::Map<const Mat>(g.data(), a.rows(), a.cols()));
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tape& t = *a.tape();
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& tape, const Mat& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& tape, const Mat& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, -g);
  });
}

Var add_bias(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_bias: shape mismatch");
  Tape& t = *a.tape();
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& tape, const Mat& g) {
    tape.accumulate(a, g);
    if (tape.requires_grad(row)) tape.accumulate(row, g.colwise().sum());
  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  return t.record(a.value() * s, {a}, [a, s](Tape& tape, const Mat& g) { tape.accumulate(a, g * s); });
}

Var relu(const Var& a) {
  Tape& t = *a.tape();
  return t.record(a.value().cwiseMax(0.0), {a}, [a](Tape& tape, const Mat& g) {
    tape.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var sigmoid(const Var& a) {
  Tape& t = *a.tape();
  // Saturation would otherwise round to exactly 0 or 1.
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  Mat y = (1.0 / (1.0 + (-a.value().array()).exp())).cwiseMax(lo).cwiseMin(hi).matrix();
  return t.record(y, {a}, [a, y](Tape& tape, const Mat& g) {
    tape.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var sqrt_eps(const Var& a, double eps) {
  Tape& t = *a.tape();
  Mat y = (a.value().array() + eps).sqrt().matrix();
  return t.record(y, {a}, [a, y](Tape& tape, const Mat& g) {
    tape.accumulate(a, (g.array() / (2.0 * y.array())).matrix());
  });
}

Var sum_all(const Var& a) {
  Tape& t = *a.tape();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [a](Tape& tape, const Mat& g) {
    tape.accumulate(a, Mat::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var sum_product(const Var& a, const Mat& weights) {
  if (weights.rows() != a.rows() || weights.cols() != a.cols()) {
    throw std::invalid_argument("sum_product: shape mismatch");
  }
  Tape& t = *a.tape();
  Mat out(1, 1);
  out(0, 0) = a.value().cwiseProduct(weights).sum();
  return t.record(std::move(out), {a},
                  [a, weights](Tape& tape, const Mat& g) { tape.accumulate(a, weights * g(0, 0)); });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Tape& t = *a.tape();
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index ca = a.cols();
  const Index cb = b.cols();
  return t.record(std::move(out), {a, b}, [a, b, ca, cb](Tape& tape, const Mat& g) {
    if (tape.requires_grad(a)) tape.accumulate(a, g.leftCols(ca));
    if (tape.requires_grad(b)) tape.accumulate(b, g.rightCols(cb));
  });
}

Var select_rows(const Var& a, const std::vector<int>& rows) {
  Tape& t = *a.tape();
  Mat out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= a.rows()) throw std::out_of_range("select_rows: index");
    out.row(static_cast<Index>(r)) = a.value().row(rows[r]);
  }
  return t.record(std::move(out), {a}, [a, rows](Tape& tape, const Mat& g) {
    Mat ga = Mat::Zero(a.rows(), a.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) ga.row(rows[r]) += g.row(static_cast<Index>(r));
    tape.accumulate(a, ga);
  });
}

Var group_reduce(const Var& a, const std::vector<int>& labels, int groups, bool mean) {
  if (static_cast<Index>(labels.size()) != a.rows()) {
    throw std::invalid_argument("group_reduce: one label per row required");
  }
  std::vector<double> weight(static_cast<std::size_t>(groups), 0.0);
  for (int l : labels) {
    if (l < 0 || l >= groups) throw std::out_of_range("group_reduce: label out of range");
    weight[static_cast<std::size_t>(l)] += 1.0;
  }
  for (auto& w : weight) {
    if (w == 0.0) throw std::invalid_argument("group_reduce: empty class");
    w = mean ? 1.0 / w : 1.0;
  }
  Mat out = Mat::Zero(groups, a.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) out.row(labels[i]) += a.value().row(static_cast<Index>(i));
  for (int k = 0; k < groups; ++k) out.row(k) *= weight[static_cast<std::size_t>(k)];
  Tape& t = *a.tape();
  return t.record(std::move(out), {a}, [a, labels, weight](Tape& tape, const Mat& g) {
    Mat ga(a.rows(), a.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      ga.row(static_cast<Index>(i)) = g.row(labels[i]) * weight[static_cast<std::size_t>(labels[i])];
    }
    tape.accumulate(a, ga);
  });
}

Var row_sq_norm(const Var& a) {
  Tape& t = *a.tape();
  Mat out = a.value().rowwise().squaredNorm();
  return t.record(std::move(out), {a}, [a](Tape& tape, const Mat& g) {
    Mat ga = a.value();
    for (Index i = 0; i < ga.rows(); ++i) ga.row(i) *= 2.0 * g(i, 0);
    tape.accumulate(a, ga);
  });
}

Var sq_dist(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("sq_dist: dimension mismatch");
  Tape& t = *a.tape();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  Mat out(av.rows(), bv.rows());
  for (Index i = 0; i < av.rows(); ++i) {
    for (Index j = 0; j < bv.rows(); ++j) out(i, j) = (av.row(i) - bv.row(j)).squaredNorm();
  }
  return t.record(std::move(out), {a, b}, [a, b](Tape& tape, const Mat& g) {
    const Mat& av = a.value();
    const Mat& bv = b.value();
    Mat ga = Mat::Zero(av.rows(), av.cols());
    Mat gb = Mat::Zero(bv.rows(), bv.cols());
    for (Index i = 0; i < av.rows(); ++i) {
      for (Index j = 0; j < bv.rows(); ++j) {
        const Eigen::RowVectorXd diff = 2.0 * g(i, j) * (av.row(i) - bv.row(j));
        ga.row(i) += diff;
        gb.row(j) -= diff;
      }
    }
    if (tape.requires_grad(a)) tape.accumulate(a, ga);
    if (tape.requires_grad(b)) tape.accumulate(b, gb);
  });
}

namespace {

Eigen::VectorXd row_logsumexp(const Mat& x) {
  Eigen::VectorXd out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    out(i) = mx + std::log((x.row(i).array() - mx).exp().sum());
  }
  return out;
}

}  // namespace

Var log_softmax(const Var& a) {
  Tape& t = *a.tape();
  Mat y = a.value();
  const Eigen::VectorXd lse = row_logsumexp(y);
  y.colwise() -= lse;
  return t.record(y, {a}, [a, y](Tape& tape, const Mat& g) {
    Mat ga = g;
    const Mat p = y.array().exp().matrix();
    for (Index i = 0; i < ga.rows(); ++i) ga.row(i) -= p.row(i) * g.row(i).sum();
    tape.accumulate(a, ga);
  });
}

Var class_log_probs(const Var& logits, const std::vector<int>& column_labels, int classes) {
  const Mat& x = logits.value();
  if (static_cast<Index>(column_labels.size()) != x.cols()) {
    throw std::invalid_argument("class_log_probs: one label per column required");
  }
  std::vector<int> count(static_cast<std::size_t>(classes), 0);
  for (int l : column_labels) {
    if (l < 0 || l >= classes) throw std::out_of_range("class_log_probs: label out of range");
    ++count[static_cast<std::size_t>(l)];
  }
  for (int c : count) {
    if (c == 0) throw std::invalid_argument("class_log_probs: empty class");
  }
  const Eigen::VectorXd lse_all = row_logsumexp(x);
  Mat out(x.rows(), classes);
  for (Index q = 0; q < x.rows(); ++q) {
    for (int k = 0; k < classes; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < column_labels.size(); ++j) {
        if (column_labels[j] == k) mx = std::max(mx, x(q, static_cast<Index>(j)));
      }
      double s = 0.0;
      for (std::size_t j = 0; j < column_labels.size(); ++j) {
        if (column_labels[j] == k) s += std::exp(x(q, static_cast<Index>(j)) - mx);
      }
      out(q, k) = mx + std::log(s) - lse_all(q);
    }
  }
  Tape& t = *logits.tape();
  return t.record(out, {logits}, [logits, column_labels, out, lse_all](Tape& tape, const Mat& g) {
    const Mat& x = logits.value();
    Mat gx(x.rows(), x.cols());
    for (Index q = 0; q < x.rows(); ++q) {
      const double gsum = g.row(q).sum();
      for (Index j = 0; j < x.cols(); ++j) {
        const int k = column_labels[static_cast<std::size_t>(j)];
        const double p_all = std::exp(x(q, j) - lse_all(q));
        const double p_class = std::exp(x(q, j) - lse_all(q) - out(q, k));
        gx(q, j) = g(q, k) * p_class - gsum * p_all;
      }
    }
    tape.accumulate(logits, gx);
  });
}

Var nll(const Var& log_probs, const std::vector<int>& targets) {
  const Mat& lp = log_probs.value();
  if (static_cast<Index>(targets.size()) != lp.rows() || targets.empty()) {
    throw std::invalid_argument("nll: one target per row required");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= lp.cols()) throw std::out_of_range("nll: target out of range");
    s -= lp(static_cast<Index>(i), targets[i]);
  }
  const double n = static_cast<double>(targets.size());
  Mat out(1, 1);
  out(0, 0) = s / n;
  Tape& t = *log_probs.tape();
  return t.record(std::move(out), {log_probs}, [log_probs, targets, n](Tape& tape, const Mat& g) {
    Mat gl = Mat::Zero(log_probs.rows(), log_probs.cols());
    for (std::size_t i = 0; i < targets.size(); ++i) gl(static_cast<Index>(i), targets[i]) = -g(0, 0) / n;
    tape.accumulate(log_probs, gl);
  });
}

Var mse(const Var& a, const Mat& target) {
  if (target.rows() != a.rows() || target.cols() != a.cols()) {
    throw std::invalid_argument("mse: shape mismatch");
  }
  const double n = static_cast<double>(a.value().size());
  Mat out(1, 1);
  out(0, 0) = (a.value() - target).squaredNorm() / n;
  Tape& t = *a.tape();
  return t.record(std::move(out), {a}, [a, target, n](Tape& tape, const Mat& g) {
    tape.accumulate(a, (a.value() - target) * (2.0 * g(0, 0) / n));
  });
}

Index conv_out(Index size, Index kernel, Index stride, Index pad) {
  return (size + 2 * pad - kernel) / stride + 1;
}

namespace {

using RowMap = Eigen::Map<Mat>;
using ConstRowMap = Eigen::Map<const Mat>;

void im2col(const double* x, const Shape3& in, Index k, Index s, Index p, Index ho, Index wo, Mat& col) {
  col.resize(in.c * k * k, ho * wo);
  for (Index c = 0; c < in.c; ++c) {
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        double* dst = col.row((c * k + ki) * k + kj).data();
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * s - p + ki;
          double* drow = dst + oy * wo;
          if (iy < 0 || iy >= in.h) {
            std::fill(drow, drow + wo, 0.0);
            continue;
          }
          const double* src = x + (c * in.h + iy) * in.w;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * s - p + kj;
            drow[ox] = (ix >= 0 && ix < in.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const Mat& col, const Shape3& in, Index k, Index s, Index p, Index ho, Index wo, double* x) {
  for (Index c = 0; c < in.c; ++c) {
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        const double* srow = col.row((c * k + ki) * k + kj).data();
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * s - p + ki;
          if (iy < 0 || iy >= in.h) continue;
          double* dst = x + (c * in.h + iy) * in.w;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * s - p + kj;
            if (ix >= 0 && ix < in.w) dst[ix] += srow[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Shape3& in, const Var& weight, const Var& bias, Index kernel,
           Index stride, Index pad) {
  if (x.cols() != in.size()) throw std::invalid_argument("conv2d: input shape mismatch");
  if (weight.cols() != in.c * kernel * kernel) throw std::invalid_argument("conv2d: weight shape mismatch");
  const bool has_bias = bias.valid();
  const Index cout = weight.rows();
  if (has_bias && (bias.rows() != 1 || bias.cols() != cout)) {
    throw std::invalid_argument("conv2d: bias shape mismatch");
  }
  const Index ho = conv_out(in.h, kernel, stride, pad);
  const Index wo = conv_out(in.w, kernel, stride, pad);
  const Index batch = x.rows();
  Mat out(batch, cout * ho * wo);
  Mat col;
  const Mat& w = weight.value();
  for (Index b = 0; b < batch; ++b) {
    im2col(x.value().row(b).data(), in, kernel, stride, pad, ho, wo, col);
    RowMap o(out.row(b).data(), cout, ho * wo);
    o.noalias() = w * col;
    if (has_bias) o.colwise() += bias.value().row(0).transpose();
  }
  Tape& t = *x.tape();
  Tape::Backward back = [x, in, weight, bias, has_bias, kernel, stride, pad, ho, wo, cout](
                            Tape& tape, const Mat& g) {
    const Index batch = x.rows();
    const bool need_x = tape.requires_grad(x);
    const bool need_w = tape.requires_grad(weight);
    Mat gw = Mat::Zero(weight.rows(), weight.cols());
    Mat gb = Mat::Zero(1, cout);
    Mat gx = need_x ? Mat::Zero(batch, in.size()) : Mat();
    Mat col;
    Mat gcol;
    const Mat& w = weight.value();
    for (Index b = 0; b < batch; ++b) {
      ConstRowMap gs(g.row(b).data(), cout, ho * wo);
      if (need_w) {
        im2col(x.value().row(b).data(), in, kernel, stride, pad, ho, wo, col);
        gw.noalias() += gs * col.transpose();
      }
      if (has_bias) gb += gs.rowwise().sum().transpose();
      if (need_x) {
        gcol.noalias() = w.transpose() * gs;
        col2im(gcol, in, kernel, stride, pad, ho, wo, gx.row(b).data());
      }
    }
    if (need_w) tape.accumulate(weight, gw);
    if (has_bias) tape.accumulate(bias, gb);
    if (need_x) tape.accumulate(x, gx);
  };
  if (has_bias) return t.record(std::move(out), {x, weight, bias}, std::move(back));
  return t.record(std::move(out), {x, weight}, std::move(back));
}

Var avgpool2(const Var& x, const Shape3& in) {
  if (x.cols() != in.size()) throw std::invalid_argument("avgpool2: input shape mismatch");
  const Index ho = in.h / 2;
  const Index wo = in.w / 2;
  const Index batch = x.rows();
  Mat out(batch, in.c * ho * wo);
  for (Index b = 0; b < batch; ++b) {
    const double* src = x.value().row(b).data();
    double* dst = out.row(b).data();
    for (Index c = 0; c < in.c; ++c) {
      for (Index oy = 0; oy < ho; ++oy) {
        const double* r0 = src + (c * in.h + 2 * oy) * in.w;
        const double* r1 = r0 + in.w;
        for (Index ox = 0; ox < wo; ++ox) {
          dst[(c * ho + oy) * wo + ox] =
              0.25 * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
        }
      }
    }
  }
  Tape& t = *x.tape();
  return t.record(std::move(out), {x}, [x, in, ho, wo](Tape& tape, const Mat& g) {
    Mat gx = Mat::Zero(x.rows(), in.size());
    for (Index b = 0; b < x.rows(); ++b) {
      const double* gs = g.row(b).data();
      double* dst = gx.row(b).data();
      for (Index c = 0; c < in.c; ++c) {
        for (Index oy = 0; oy < ho; ++oy) {
          double* r0 = dst + (c * in.h + 2 * oy) * in.w;
          double* r1 = r0 + in.w;
          for (Index ox = 0; ox < wo; ++ox) {
            const double v = 0.25 * gs[(c * ho + oy) * wo + ox];
            r0[2 * ox] += v;
            r0[2 * ox + 1] += v;
            r1[2 * ox] += v;
            r1[2 * ox + 1] += v;
          }
        }
      }
    }
    tape.accumulate(x, gx);
  });
}

Var maxpool(const Var& x, const Shape3& in, Index kernel, Index stride, Index pad) {
  if (x.cols() != in.size()) throw std::invalid_argument("maxpool: input shape mismatch");
  const Index ho = conv_out(in.h, kernel, stride, pad);
  const Index wo = conv_out(in.w, kernel, stride, pad);
  const Index batch = x.rows();
  Mat out(batch, in.c * ho * wo);
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(out.size()));
  for (Index b = 0; b < batch; ++b) {
    const double* src = x.value().row(b).data();
    for (Index c = 0; c < in.c; ++c) {
      for (Index oy = 0; oy < ho; ++oy) {
        for (Index ox = 0; ox < wo; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          Index best_at = -1;
          for (Index ki = 0; ki < kernel; ++ki) {
            const Index iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= in.h) continue;
            for (Index kj = 0; kj < kernel; ++kj) {
              const Index ix = ox * stride - pad + kj;
              if (ix < 0 || ix >= in.w) continue;
              const Index at = (c * in.h + iy) * in.w + ix;
              if (src[at] > best) {
                best = src[at];
                best_at = at;
              }
            }
          }
          const Index o = (c * ho + oy) * wo + ox;
          out(b, o) = best;
          (*argmax)[static_cast<std::size_t>(b * out.cols() + o)] = best_at;
        }
      }
    }
  }
  const Index ocols = out.cols();
  Tape& t = *x.tape();
  return t.record(std::move(out), {x}, [x, in, argmax, ocols](Tape& tape, const Mat& g) {
    Mat gx = Mat::Zero(x.rows(), in.size());
    for (Index b = 0; b < x.rows(); ++b) {
      for (Index o = 0; o < ocols; ++o) {
        const Index at = (*argmax)[static_cast<std::size_t>(b * ocols + o)];
        if (at >= 0) gx(b, at) += g(b, o);
      }
    }
    tape.accumulate(x, gx);
  });
}

Var global_avgpool(const Var& x, const Shape3& in) {
  if (x.cols() != in.size()) throw std::invalid_argument("global_avgpool: input shape mismatch");
  const Index hw = in.h * in.w;
  Mat out(x.rows(), in.c);
  for (Index b = 0; b < x.rows(); ++b) {
    ConstRowMap m(x.value().row(b).data(), in.c, hw);
    out.row(b) = m.rowwise().mean().transpose();
  }
  Tape& t = *x.tape();
  return t.record(std::move(out), {x}, [x, in, hw](Tape& tape, const Mat& g) {
    Mat gx(x.rows(), in.size());
    for (Index b = 0; b < x.rows(); ++b) {
      RowMap m(gx.row(b).data(), in.c, hw);
      for (Index c = 0; c < in.c; ++c) m.row(c).setConstant(g(b, c) / static_cast<double>(hw));
    }
    tape.accumulate(x, gx);
  });
}

Var channel_affine(const Var& x, const Shape3& in, const Var& scale_v, const Var& shift_v) {
  if (x.cols() != in.size()) throw std::invalid_argument("channel_affine: input shape mismatch");
  if (scale_v.cols() != in.c || shift_v.cols() != in.c) {
    throw std::invalid_argument("channel_affine: parameter shape mismatch");
  }
  const Index hw = in.h * in.w;
  Mat out(x.rows(), in.size());
  for (Index b = 0; b < x.rows(); ++b) {
    ConstRowMap src(x.value().row(b).data(), in.c, hw);
    RowMap dst(out.row(b).data(), in.c, hw);
    for (Index c = 0; c < in.c; ++c) {
      dst.row(c) = (src.row(c).array() * scale_v.value()(0, c) + shift_v.value()(0, c)).matrix();
    }
  }
  Tape& t = *x.tape();
  return t.record(std::move(out), {x, scale_v, shift_v}, [x, in, hw, scale_v, shift_v](Tape& tape, const Mat& g) {
    Mat gx(x.rows(), in.size());
    Mat gs = Mat::Zero(1, in.c);
    Mat gt = Mat::Zero(1, in.c);
    for (Index b = 0; b < x.rows(); ++b) {
      ConstRowMap gm(g.row(b).data(), in.c, hw);
      ConstRowMap xm(x.value().row(b).data(), in.c, hw);
      RowMap gxm(gx.row(b).data(), in.c, hw);
      for (Index c = 0; c < in.c; ++c) {
        gxm.row(c) = gm.row(c) * scale_v.value()(0, c);
        gs(0, c) += gm.row(c).dot(xm.row(c));
        gt(0, c) += gm.row(c).sum();
      }
    }
    tape.accumulate(x, gx);
    tape.accumulate(scale_v, gs);
    tape.accumulate(shift_v, gt);
  });
}

}  // namespace graphgrade::nn
