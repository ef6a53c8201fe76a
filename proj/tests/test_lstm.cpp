#include <cmath>
#include <algorithm>
#include <memory>
#include <random>

#include "doctest.h"
#include "urbanflow/lstm.hpp"

using namespace urbanflow;
using namespace urbanflow::nn;

namespace {

struct Net {
  Layout layout;
  LstmShape lstm;
  DenseShape head;
  Vec<double> params;

  Net(int input, int hidden, int output, std::uint64_t seed) {
    lstm = add_lstm(layout, input, hidden);
    head = add_dense(layout, hidden, output);
    params = Vec<double>::Zero(layout.size());
    std::mt19937_64 rng(seed);
    init_lstm(params, lstm, rng);
    init_dense(params, head, rng);
    // Random biases too, so every parameter carries gradient.
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    auto b = view(params, lstm.b);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] += u(rng);
  }
};

std::vector<Mat<double>> random_sequence(int input, int batch, int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Mat<double>> xs(static_cast<std::size_t>(steps), Mat<double>(input, batch));
  for (auto& x : xs)
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  return xs;
}

// Sum over steps of 0.5 * |dense(h_t) - target|^2.
double loss(const Net& net, const Vec<double>& p, const std::vector<Mat<double>>& xs, const Mat<double>& target,
            Vec<double>* grad) {
  LstmTape<double> tape;
  const auto& hs = lstm_forward(p, net.lstm, xs, tape);
  double l = 0.0;
  std::vector<Mat<double>> dh(hs.size());
  if (grad) grad->setZero(p.size());
  for (std::size_t t = 0; t < hs.size(); ++t) {
    const Mat<double> y = dense_forward(p, net.head, hs[t]);
    const Mat<double> d = y - target;
    l += 0.5 * d.squaredNorm();
    if (grad) dh[t] = dense_backward(p, net.head, hs[t], d, *grad);
  }
  if (grad) lstm_backward(p, net.lstm, tape, dh, *grad);
  return l;
}

}  // namespace

TEST_CASE("zero weights give zero states") {
  Layout layout;
  const LstmShape s = add_lstm(layout, 3, 4);
  const Vec<double> p = Vec<double>::Zero(layout.size());
  std::vector<Mat<double>> xs(5, Mat<double>::Zero(3, 2));
  LstmTape<double> tape;
  for (const auto& h : lstm_forward(p, s, xs, tape)) CHECK(h.isZero(0.0));
}

TEST_CASE("hand-evaluated single cell") {
  Layout layout;
  const LstmShape s = add_lstm(layout, 1, 1);
  const Vec<double> p = Vec<double>::Constant(layout.size(), 0.5);
  LstmTape<double> tape;
  const auto& h = lstm_forward(p, s, {Mat<double>::Constant(1, 1, 1.0)}, tape);
  const double gate = 1.0 / (1.0 + std::exp(-1.0));
  const double c = gate * std::tanh(1.0);
  const double hv = gate * std::tanh(c);
  CHECK(tape.c[0](0, 0) == doctest::Approx(c).epsilon(1e-14));
  CHECK(h[0](0, 0) == doctest::Approx(hv).epsilon(1e-14));
  // Rounded published values.
  CHECK(std::abs(tape.c[0](0, 0) - 0.5568) <= 1e-3);
  CHECK(std::abs(h[0](0, 0) - 0.3699) <= 1e-3);
}

TEST_CASE("BPTT matches central differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Net net(3, 5, 2, seed);
    const auto xs = random_sequence(3, 2, 6, seed + 100);
    const Mat<double> target = Mat<double>::Constant(2, 2, 0.3);
    Vec<double> grad;
    loss(net, net.params, xs, target, &grad);
    double worst = 0.0;
    const double eps = 1e-5;
    for (Eigen::Index i = 0; i < net.params.size(); ++i) {
      Vec<double> p = net.params;
      p(i) += eps;
      const double up = loss(net, p, xs, target, nullptr);
      p(i) -= 2 * eps;
      const double down = loss(net, p, xs, target, nullptr);
      const double fd = (up - down) / (2 * eps);
      const double rel = std::abs(fd - grad(i)) / std::max({std::abs(fd), std::abs(grad(i)), 1e-6});
      worst = std::max(worst, rel);
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("softmax and bounded states") {
  const Mat<double> logits = (Mat<double>(3, 2) << 30.0, -2.0, 29.0, 0.0, -5.0, 3.0).finished();
  const Mat<double> p = softmax(logits);
  for (Eigen::Index c = 0; c < 2; ++c) {
    CHECK(std::abs(p.col(c).sum() - 1.0) <= 1e-9);
    CHECK((p.col(c).array() > 0.0).all());
    CHECK((p.col(c).array() < 1.0).all());
  }
  CHECK(softmax(Mat<double>(Mat<double>::Zero(3, 1)))(1, 0) == doctest::Approx(1.0 / 3.0));

  const Net net(4, 8, 1, 3);
  const auto xs = random_sequence(4, 3, 20, 4);
  Vec<double> big = net.params * 50.0;
  LstmTape<double> tape;
  for (const auto& h : lstm_forward(big, net.lstm, xs, tape)) CHECK(h.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("Adam") {
  const Net net(2, 3, 1, 8);
  const auto xs = random_sequence(2, 1, 4, 9);
  const Mat<double> target = Mat<double>::Constant(1, 1, 0.8);
  Vec<double> p = net.params;
  Adam<double> frozen(p.size(), 0.0);
  Vec<double> g;
  for (int i = 0; i < 10; ++i) {
    loss(net, p, xs, target, &g);
    frozen.step(p, g);
  }
  CHECK((p.array() == net.params.array()).all());

  Adam<double> opt(p.size(), 1e-4);
  const double before = loss(net, p, xs, target, &g);
  opt.step(p, g);
  CHECK(loss(net, p, xs, target, nullptr) < before);

  CHECK_THROWS_AS(lstm_forward(p, net.lstm, {Mat<double>::Zero(5, 1)}, *std::make_unique<LstmTape<double>>()), Error);
}
