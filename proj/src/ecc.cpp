#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>

#include "urbanflow/stabilize.hpp"

namespace urbanflow {
namespace {

using Vector8d = Eigen::Matrix<double, 8, 1>;
using Matrix8d = Eigen::Matrix<double, 8, 8>;

struct Gradients {
  ImageBuffer gx;
  ImageBuffer gy;
};

Gradients central_gradients(const ImageBuffer& img) {
  const Eigen::Index rows = img.rows();
  const Eigen::Index cols = img.cols();
  Gradients g{ImageBuffer::Zero(rows, cols), ImageBuffer::Zero(rows, cols)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Eigen::Index cl = std::max<Eigen::Index>(c - 1, 0);
      const Eigen::Index cr = std::min<Eigen::Index>(c + 1, cols - 1);
      const Eigen::Index ru = std::max<Eigen::Index>(r - 1, 0);
      const Eigen::Index rd = std::min<Eigen::Index>(r + 1, rows - 1);
      g.gx(r, c) = (img(r, cr) - img(r, cl)) / static_cast<double>(cr - cl);
      g.gy(r, c) = (img(rd, c) - img(ru, c)) / static_cast<double>(rd - ru);
    }
  }
  return g;
}

// Warp parameters: the eight free entries of w (reference -> target), w(2,2) = 1.
Vector8d to_params(const Homography& w) {
  Vector8d p;
  p << w(0, 0), w(0, 1), w(0, 2), w(1, 0), w(1, 1), w(1, 2), w(2, 0), w(2, 1);
  return p;
}

Homography from_params(const Vector8d& p) {
  Homography w;
  w << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), 1.0;
  return w;
}

struct Sampled {
  Eigen::VectorXd templ;  // reference intensities
  Eigen::VectorXd image;  // warped target intensities
  Eigen::Matrix<double, Eigen::Dynamic, 8> jacobian;
};

// Samples the target (and optionally its gradients) at w(x) for every
// reference pixel x whose image lands inside the target.
Sampled sample_warp(const ImageBuffer& ref, const ImageBuffer& tgt, const Gradients* grads,
                    const Homography& w) {
  const Eigen::Index rows = ref.rows();
  const Eigen::Index cols = ref.cols();
  Sampled s;
  s.templ.resize(rows * cols);
  s.image.resize(rows * cols);
  if (grads != nullptr) s.jacobian.resize(rows * cols, 8);
  Eigen::Index n = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double y = static_cast<double>(r) + 0.5;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double x = static_cast<double>(c) + 0.5;
      const double den = w(2, 0) * x + w(2, 1) * y + 1.0;
      if (std::abs(den) < 1e-12) continue;
      const double xw = (w(0, 0) * x + w(0, 1) * y + w(0, 2)) / den;
      const double yw = (w(1, 0) * x + w(1, 1) * y + w(1, 2)) / den;
      double value = 0.0;
      if (!sample_bilinear(tgt, xw, yw, value)) continue;
      if (grads != nullptr) {
        double ix = 0.0;
        double iy = 0.0;
        sample_bilinear(grads->gx, xw, yw, ix);
        sample_bilinear(grads->gy, xw, yw, iy);
        const double inv = 1.0 / den;
        s.jacobian.row(n) << ix * x * inv, ix * y * inv, ix * inv, iy * x * inv, iy * y * inv, iy * inv,
            -(ix * xw + iy * yw) * x * inv, -(ix * xw + iy * yw) * y * inv;
      }
      s.templ(n) = ref(r, c);
      s.image(n) = value;
      ++n;
    }
  }
  s.templ.conservativeResize(n);
  s.image.conservativeResize(n);
  if (grads != nullptr) s.jacobian.conservativeResize(n, 8);
  return s;
}

double correlation(Eigen::VectorXd t, Eigen::VectorXd i) {
  if (t.size() < 2) return -1.0;
  t.array() -= t.mean();
  i.array() -= i.mean();
  const double denom = t.norm() * i.norm();
  if (!(denom > 1e-15)) return -1.0;
  return t.dot(i) / denom;
}

}  // namespace

double ecc_correlation(const ImageBuffer& ref, const ImageBuffer& tgt, const Homography& h) {
  if (!is_invertible(h)) fail(ErrorKind::InvalidArgument, "singular homography");
  const Homography w = normalize_homography(h.inverse());
  Sampled s = sample_warp(ref, tgt, nullptr, w);
  return correlation(std::move(s.templ), std::move(s.image));
}

EccResult ecc_refine(const ImageBuffer& ref_in, const ImageBuffer& tgt_in, const Homography& h_init,
                     const StabilizerConfig& cfg) {
  if (ref_in.rows() != tgt_in.rows() || ref_in.cols() != tgt_in.cols()) {
    fail(ErrorKind::InvalidArgument, "ecc_refine: image dimensions differ");
  }
  if (!is_invertible(h_init)) fail(ErrorKind::InvalidArgument, "ecc_refine: singular initial homography");

  const ImageBuffer ref = cfg.ecc_presmooth ? binomial_blur(ref_in) : ref_in;
  const ImageBuffer tgt = cfg.ecc_presmooth ? binomial_blur(tgt_in) : tgt_in;
  const Gradients grads = central_gradients(tgt);

  Vector8d p = to_params(normalize_homography(h_init.inverse()));
  EccResult best{normalize_homography(h_init), -2.0, 0, false};
  double previous = -2.0;
  int decreasing = 0;

  for (int iter = 0; iter <= cfg.ecc_max_iters; ++iter) {
    const Homography w = from_params(p);
    if (!is_invertible(w)) {
      best.diverged = true;
      break;
    }
    Sampled s = sample_warp(ref, tgt, &grads, w);
    if (s.templ.size() < 16) {
      if (iter == 0) fail(ErrorKind::EstimationFailed, "ecc_refine: no overlap under initial homography");
      best.diverged = true;
      break;
    }
    s.templ.array() -= s.templ.mean();
    s.image.array() -= s.image.mean();
    s.jacobian.rowwise() -= s.jacobian.colwise().mean();
    const double t_norm = s.templ.norm();
    const double i_norm = s.image.norm();
    if (!(t_norm > 1e-15) || !(i_norm > 1e-15)) {
      fail(ErrorKind::EstimationFailed, "ecc_refine: constant image region");
    }
    const double corr = s.templ.dot(s.image);
    const double rho = corr / (t_norm * i_norm);

    if (rho > best.score) {
      best.score = rho;
      best.h = normalize_homography(w.inverse());
    }
    decreasing = rho < previous ? decreasing + 1 : 0;
    previous = rho;
    if (decreasing >= 5) {
      best.diverged = true;
      break;
    }
    if (iter == cfg.ecc_max_iters) break;

    const Matrix8d hessian = s.jacobian.transpose() * s.jacobian;
    Eigen::FullPivLU<Matrix8d> lu(hessian);
    if (!lu.isInvertible()) fail(ErrorKind::EstimationFailed, "ecc_refine: singular normal matrix");
    const Vector8d image_proj = s.jacobian.transpose() * s.image;
    const Vector8d templ_proj = s.jacobian.transpose() * s.templ;
    const Vector8d image_proj_h = lu.solve(image_proj);
    const double lambda_n = i_norm * i_norm - image_proj.dot(image_proj_h);
    const double lambda_d = corr - templ_proj.dot(image_proj_h);
    Vector8d delta;
    if (lambda_d <= 0.0) {
      // Correlation is negative in the orthogonal complement; take the step
      // that maximizes it in the linearized model's range instead.
      const double lambda = std::sqrt(std::max(lambda_n, 0.0) /
                                      std::max(templ_proj.dot(lu.solve(templ_proj)), 1e-300));
      delta = lu.solve(lambda * templ_proj - image_proj);
    } else {
      const double lambda = lambda_n / lambda_d;
      delta = lu.solve(s.jacobian.transpose() * (lambda * s.templ - s.image));
    }
    ++best.iterations;
    p += delta;
    if (delta.norm() < cfg.ecc_eps) {
      // Score the converged parameters before stopping.
      const Homography wf = from_params(p);
      if (is_invertible(wf)) {
        const double rf = ecc_correlation(ref, tgt, normalize_homography(wf.inverse()));
        if (rf > best.score) {
          best.score = rf;
          best.h = normalize_homography(wf.inverse());
        }
      }
      break;
    }
  }
  return best;
}

}  // namespace urbanflow
