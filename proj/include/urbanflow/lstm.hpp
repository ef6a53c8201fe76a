#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "urbanflow/error.hpp"

namespace urbanflow::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// A parameter block inside a flat parameter vector (column-major matrix).
struct Block {
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

class Layout {
 public:
  Block add(Eigen::Index rows, Eigen::Index cols) {
    Block b{size_, rows, cols};
    size_ += rows * cols;
    return b;
  }
  Eigen::Index size() const { return size_; }

 private:
  Eigen::Index size_ = 0;
};

template <typename Scalar>
Eigen::Map<Mat<Scalar>> view(Vec<Scalar>& flat, const Block& b) {
  return Eigen::Map<Mat<Scalar>>(flat.data() + b.offset, b.rows, b.cols);
}

template <typename Scalar>
Eigen::Map<const Mat<Scalar>> view(const Vec<Scalar>& flat, const Block& b) {
  return Eigen::Map<const Mat<Scalar>>(flat.data() + b.offset, b.rows, b.cols);
}

/// Single LSTM layer. Gate rows are stacked as [input, forget, cell, output].
struct LstmShape {
  int input = 0;
  int hidden = 0;
  Block w;  // 4H x I
  Block u;  // 4H x H
  Block b;  // 4H x 1
};

inline LstmShape add_lstm(Layout& layout, int input, int hidden) {
  if (input < 1 || hidden < 1) fail(ErrorKind::InvalidArgument, "LSTM sizes must be positive");
  return {input, hidden, layout.add(4 * hidden, input), layout.add(4 * hidden, hidden), layout.add(4 * hidden, 1)};
}

struct DenseShape {
  int input = 0;
  int output = 0;
  Block w;  // O x I
  Block b;  // O x 1
};

inline DenseShape add_dense(Layout& layout, int input, int output) {
  return {input, output, layout.add(output, input), layout.add(output, 1)};
}

/// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1.
template <typename Scalar>
void init_lstm(Vec<Scalar>& flat, const LstmShape& s, std::mt19937_64& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(s.hidden));
  std::uniform_real_distribution<double> dist(-k, k);
  for (const Block* blk : {&s.w, &s.u}) {
    auto m = view(flat, *blk);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar(dist(rng));
  }
  auto b = view(flat, s.b);
  b.setZero();
  b.middleRows(s.hidden, s.hidden).setConstant(Scalar(1));
}

template <typename Scalar>
void init_dense(Vec<Scalar>& flat, const DenseShape& s, std::mt19937_64& rng, double scale = 1.0) {
  const double k = scale / std::sqrt(static_cast<double>(s.input));
  std::uniform_real_distribution<double> dist(-k, k);
  auto w = view(flat, s.w);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = Scalar(dist(rng));
  view(flat, s.b).setZero();
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

/// Activations kept for the backward pass; every matrix has one column per
/// batch element.
template <typename Scalar>
struct LstmTape {
  std::vector<Mat<Scalar>> x;
  std::vector<Mat<Scalar>> gates;  // post-activation, 4H x B
  std::vector<Mat<Scalar>> c;
  std::vector<Mat<Scalar>> tanh_c;
  std::vector<Mat<Scalar>> h;
};

/// Runs the layer over `xs` from zero initial state; returns hidden states.
template <typename Scalar>
const std::vector<Mat<Scalar>>& lstm_forward(const Vec<Scalar>& flat, const LstmShape& s,
                                             const std::vector<Mat<Scalar>>& xs, LstmTape<Scalar>& tape) {
  const Eigen::Index hdim = s.hidden;
  const auto w = view(flat, s.w);
  const auto u = view(flat, s.u);
  const auto b = view(flat, s.b);
  tape.x = xs;
  tape.gates.assign(xs.size(), Mat<Scalar>());
  tape.c.assign(xs.size(), Mat<Scalar>());
  tape.tanh_c.assign(xs.size(), Mat<Scalar>());
  tape.h.assign(xs.size(), Mat<Scalar>());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Mat<Scalar>& x = xs[t];
    if (x.rows() != s.input) fail(ErrorKind::InvalidArgument, "LSTM input dimension mismatch");
    if (t > 0 && x.cols() != xs[0].cols()) fail(ErrorKind::InvalidArgument, "LSTM batch size changes over time");
    Mat<Scalar> z = w * x;
    z.colwise() += b.col(0);
    if (t > 0) z.noalias() += u * tape.h[t - 1];
    Mat<Scalar>& g = tape.gates[t];
    g.resize(z.rows(), z.cols());
    g.topRows(2 * hdim) = z.topRows(2 * hdim).unaryExpr([](Scalar v) { return sigmoid(v); });
    g.middleRows(2 * hdim, hdim) = z.middleRows(2 * hdim, hdim).array().tanh();
    g.bottomRows(hdim) = z.bottomRows(hdim).unaryExpr([](Scalar v) { return sigmoid(v); });
    Mat<Scalar> c = g.topRows(hdim).cwiseProduct(g.middleRows(2 * hdim, hdim));
    if (t > 0) c += g.middleRows(hdim, hdim).cwiseProduct(tape.c[t - 1]);
    tape.tanh_c[t] = c.array().tanh();
    tape.h[t] = g.bottomRows(hdim).cwiseProduct(tape.tanh_c[t]);
    tape.c[t] = std::move(c);
  }
  return tape.h;
}

/// Backpropagation through time. `dh[t]` is the loss gradient w.r.t. h_t from
/// outside the recurrence (empty matrices mean zero). Parameter gradients are
/// accumulated into `grad`.
template <typename Scalar>
void lstm_backward(const Vec<Scalar>& flat, const LstmShape& s, const LstmTape<Scalar>& tape,
                   const std::vector<Mat<Scalar>>& dh, Vec<Scalar>& grad) {
  const Eigen::Index hdim = s.hidden;
  const auto u = view(flat, s.u);
  auto gw = view(grad, s.w);
  auto gu = view(grad, s.u);
  auto gb = view(grad, s.b);
  const std::size_t steps = tape.h.size();
  if (steps == 0) return;
  const Eigen::Index batch = tape.h[0].cols();
  Mat<Scalar> dh_next = Mat<Scalar>::Zero(hdim, batch);
  Mat<Scalar> dc_next = Mat<Scalar>::Zero(hdim, batch);
  Mat<Scalar> dz(4 * hdim, batch);
  for (std::size_t t = steps; t-- > 0;) {
    Mat<Scalar> dht = dh_next;
    if (t < dh.size() && dh[t].size() != 0) dht += dh[t];
    const auto& g = tape.gates[t];
    const auto gi = g.topRows(hdim).array();
    const auto gf = g.middleRows(hdim, hdim).array();
    const auto gg = g.middleRows(2 * hdim, hdim).array();
    const auto go = g.bottomRows(hdim).array();
    const auto tc = tape.tanh_c[t].array();
    const Mat<Scalar> dc = (dht.array() * go * (Scalar(1) - tc * tc) + dc_next.array()).matrix();
    dz.bottomRows(hdim) = (dht.array() * tc * go * (Scalar(1) - go)).matrix();
    dz.topRows(hdim) = (dc.array() * gg * gi * (Scalar(1) - gi)).matrix();
    dz.middleRows(2 * hdim, hdim) = (dc.array() * gi * (Scalar(1) - gg * gg)).matrix();
    if (t > 0) {
      dz.middleRows(hdim, hdim) = (dc.array() * tape.c[t - 1].array() * gf * (Scalar(1) - gf)).matrix();
    } else {
      dz.middleRows(hdim, hdim).setZero();
    }
    dc_next = (dc.array() * gf).matrix();
    gw.noalias() += dz * tape.x[t].transpose();
    gb.col(0) += dz.rowwise().sum();
    if (t > 0) {
      gu.noalias() += dz * tape.h[t - 1].transpose();
      dh_next.noalias() = u.transpose() * dz;
    }
  }
}

template <typename Scalar>
Mat<Scalar> dense_forward(const Vec<Scalar>& flat, const DenseShape& s, const Mat<Scalar>& x) {
  if (x.rows() != s.input) fail(ErrorKind::InvalidArgument, "dense input dimension mismatch");
  Mat<Scalar> y = view(flat, s.w) * x;
  y.colwise() += view(flat, s.b).col(0);
  return y;
}

/// Accumulates parameter gradients; returns the gradient w.r.t. the input.
template <typename Scalar>
Mat<Scalar> dense_backward(const Vec<Scalar>& flat, const DenseShape& s, const Mat<Scalar>& x, const Mat<Scalar>& dy,
                           Vec<Scalar>& grad) {
  view(grad, s.w).noalias() += dy * x.transpose();
  view(grad, s.b).col(0) += dy.rowwise().sum();
  return view(flat, s.w).transpose() * dy;
}

/// Column-wise softmax.
template <typename Scalar>
Mat<Scalar> softmax(const Mat<Scalar>& logits) {
  Mat<Scalar> p(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const auto col = logits.col(c);
    const Scalar m = col.maxCoeff();
    p.col(c) = (col.array() - m).exp().matrix();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

/// Adaptive-moment optimizer over a flat parameter vector.
template <typename Scalar>
class Adam {
 public:
  Adam(Eigen::Index size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vec<Scalar>::Zero(size)), v_(Vec<Scalar>::Zero(size)) {}

  void step(Vec<Scalar>& params, const Vec<Scalar>& grad) {
    if (lr_ == 0.0) return;
    ++t_;
    m_ = Scalar(beta1_) * m_ + Scalar(1 - beta1_) * grad;
    v_ = Scalar(beta2_) * v_ + Scalar(1 - beta2_) * grad.cwiseProduct(grad);
    const Scalar c1 = Scalar(1 - std::pow(beta1_, t_));
    const Scalar c2 = Scalar(1 - std::pow(beta2_, t_));
    params.array() -= Scalar(lr_) * (m_.array() / c1) / ((v_.array() / c2).sqrt() + Scalar(eps_));
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  int t_ = 0;
  Vec<Scalar> m_;
  Vec<Scalar> v_;
};

}  // namespace urbanflow::nn
