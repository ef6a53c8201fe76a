#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include <optional>
#include <vector>

#include "urbanflow/error.hpp"

namespace urbanflow {

/// Linear-Gaussian model x(n) = F x(n-1) + q, z(n) = H x(n) + r.
template <typename Scalar>
struct KalmanModel {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix F;
  Matrix H;
  Matrix Q;
  Matrix R;
  Scalar dt = Scalar(1);

  Eigen::Index state_dim() const { return F.rows(); }
  Eigen::Index measurement_dim() const { return H.rows(); }

  /// 2-D constant-velocity model on [px, py, vx, vy] with discrete white-noise
  /// acceleration of variance `accel_var` and isotropic measurement noise.
  static KalmanModel constant_velocity(Scalar dt, Scalar accel_var, Scalar meas_sigma) {
    if (!(dt > Scalar(0))) fail(ErrorKind::InvalidArgument, "dt must be positive");
    KalmanModel m;
    m.dt = dt;
    m.F = Matrix::Identity(4, 4);
    m.F(0, 2) = dt;
    m.F(1, 3) = dt;
    m.H = Matrix::Zero(2, 4);
    m.H(0, 0) = Scalar(1);
    m.H(1, 1) = Scalar(1);
    Matrix g = Matrix::Zero(4, 2);
    g(0, 0) = g(1, 1) = dt * dt / Scalar(2);
    g(2, 0) = g(3, 1) = dt;
    m.Q = accel_var * g * g.transpose();
    m.R = meas_sigma * meas_sigma * Matrix::Identity(2, 2);
    return m;
  }

  void validate() const {
    const Eigen::Index n = F.rows();
    if (F.cols() != n || H.cols() != n || Q.rows() != n || Q.cols() != n || R.rows() != H.rows() ||
        R.cols() != H.rows()) {
      fail(ErrorKind::InvalidArgument, "Kalman model dimensions are inconsistent");
    }
    if (!(dt > Scalar(0))) fail(ErrorKind::InvalidArgument, "dt must be positive");
    if (!(R - R.transpose()).isZero(Scalar(1e-12)) || !(Q - Q.transpose()).isZero(Scalar(1e-12))) {
      fail(ErrorKind::InvalidArgument, "Q and R must be symmetric");
    }
    if (Eigen::LLT<Matrix>(R).info() != Eigen::Success) {
      fail(ErrorKind::InvalidArgument, "R must be positive definite");
    }
  }
};

template <typename Scalar>
struct KalmanState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector x;
  Matrix P;
};

template <typename Derived>
void symmetrize(Eigen::MatrixBase<Derived>& p) {
  p = (0.5 * (p + p.transpose())).eval();
}

template <typename Scalar>
KalmanState<Scalar> kf_predict(const KalmanState<Scalar>& s, const KalmanModel<Scalar>& m) {
  KalmanState<Scalar> out{m.F * s.x, m.F * s.P * m.F.transpose() + m.Q};
  symmetrize(out.P);
  return out;
}

struct Innovation {
  double nis = 0.0;  // normalized innovation squared
};

/// Measurement update with the Joseph-form covariance.
template <typename Scalar>
KalmanState<Scalar> kf_update(const KalmanState<Scalar>& pred, const KalmanModel<Scalar>& m,
                              const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& z, Innovation* innov = nullptr) {
  using Matrix = typename KalmanModel<Scalar>::Matrix;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y = z - m.H * pred.x;
  Matrix s = m.H * pred.P * m.H.transpose() + m.R;
  symmetrize(s);
  Eigen::LDLT<Matrix> ldlt(s);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      (ldlt.vectorD().array() <= Scalar(0)).any()) {
    fail(ErrorKind::NumericalFailure, "innovation covariance is not invertible");
  }
  // K = P H^T S^-1, computed as (S^-1 H P)^T.
  const Matrix k = ldlt.solve(m.H * pred.P).transpose();
  const Matrix ikh = Matrix::Identity(pred.P.rows(), pred.P.cols()) - k * m.H;
  KalmanState<Scalar> out{pred.x + k * y, ikh * pred.P * ikh.transpose() + k * m.R * k.transpose()};
  symmetrize(out.P);
  if (innov != nullptr) innov->nis = static_cast<double>(y.dot(ldlt.solve(y)));
  return out;
}

template <typename Scalar>
KalmanState<Scalar> kf_step(const KalmanState<Scalar>& s, const KalmanModel<Scalar>& m,
                            const std::optional<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& z,
                            Innovation* innov = nullptr) {
  const KalmanState<Scalar> pred = kf_predict(s, m);
  if (!z) return pred;
  return kf_update(pred, m, *z, innov);
}

/// Rauch-Tung-Striebel backward pass. `filtered[k]` and `predicted[k]` are the
/// posterior and prior at step k; predicted[0] is unused.
template <typename Scalar>
std::vector<KalmanState<Scalar>> rts_backward(const std::vector<KalmanState<Scalar>>& filtered,
                                              const std::vector<KalmanState<Scalar>>& predicted,
                                              const KalmanModel<Scalar>& m) {
  using Matrix = typename KalmanModel<Scalar>::Matrix;
  const std::size_t n = filtered.size();
  if (n < 2 || predicted.size() != n) fail(ErrorKind::InvalidInput, "smoother needs matching filtered/predicted sequences");
  std::vector<KalmanState<Scalar>> out(filtered);
  for (std::size_t k = n - 1; k-- > 0;) {
    const auto& pp = predicted[k + 1];
    if (pp.P.size() == 0 || filtered[k].P.size() == 0) fail(ErrorKind::InvalidInput, "missing stored covariance");
    Eigen::LDLT<Matrix> ldlt(pp.P);
    if (ldlt.info() != Eigen::Success) fail(ErrorKind::NumericalFailure, "predicted covariance not invertible");
    // C = P_k F^T (P_{k+1|k})^-1
    const Matrix c = ldlt.solve(m.F * filtered[k].P).transpose();
    out[k].x = filtered[k].x + c * (out[k + 1].x - pp.x);
    out[k].P = filtered[k].P + c * (out[k + 1].P - pp.P) * c.transpose();
    symmetrize(out[k].P);
  }
  return out;
}

}  // namespace urbanflow
