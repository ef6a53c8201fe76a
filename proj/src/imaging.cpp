#include "urbanflow/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace urbanflow {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::NoOverlap: return "no-overlap";
    case ErrorKind::DegenerateInput: return "degenerate-input";
    case ErrorKind::InsufficientFeatures: return "insufficient-features";
    case ErrorKind::EstimationFailed: return "estimation-failed";
    case ErrorKind::InvalidGeometry: return "invalid-geometry";
    case ErrorKind::AmbiguousProjection: return "ambiguous-projection";
    case ErrorKind::OutOfRange: return "out-of-range";
    case ErrorKind::NumericalFailure: return "numerical-failure";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Dependency: return "dependency";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

void validate_intensity(const ImageBuffer& img) {
  if (img.size() == 0) fail(ErrorKind::InvalidArgument, "empty image");
  if (!img.allFinite() || img.minCoeff() < 0.0 || img.maxCoeff() > 1.0) {
    fail(ErrorKind::InvalidArgument, "intensities must lie in [0,1]");
  }
}

ImageBuffer downsample(const ImageBuffer& img, int factor) {
  if (factor != 1 && factor != 2 && factor != 4 && factor != 8) {
    fail(ErrorKind::InvalidArgument, "down-sampling factor must be 1, 2, 4 or 8");
  }
  if (img.rows() < factor || img.cols() < factor) {
    fail(ErrorKind::InvalidArgument, "image smaller than down-sampling factor");
  }
  if (factor == 1) return img;
  const Eigen::Index rows = img.rows() / factor;
  const Eigen::Index cols = img.cols() / factor;
  const double inv_area = 1.0 / (factor * factor);
  ImageBuffer out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      out(r, c) = img.block(r * factor, c * factor, factor, factor).sum() * inv_area;
    }
  }
  return out;
}

bool sample_bilinear(const ImageBuffer& img, double x, double y, double& value) {
  constexpr double kSlack = 1e-9;
  const double u = x - 0.5;
  const double v = y - 0.5;
  const auto w = static_cast<double>(img.cols());
  const auto h = static_cast<double>(img.rows());
  if (!(u >= -kSlack && v >= -kSlack && u <= w - 1.0 + kSlack && v <= h - 1.0 + kSlack)) {
    return false;
  }
  const double uc = std::clamp(u, 0.0, w - 1.0);
  const double vc = std::clamp(v, 0.0, h - 1.0);
  auto x0 = static_cast<Eigen::Index>(std::floor(uc));
  auto y0 = static_cast<Eigen::Index>(std::floor(vc));
  double fx = uc - static_cast<double>(x0);
  double fy = vc - static_cast<double>(y0);
  if (x0 >= img.cols() - 1) {
    if (img.cols() == 1) {
      fx = 0.0;
    } else {
      x0 = img.cols() - 2;
      fx = 1.0;
    }
  }
  if (y0 >= img.rows() - 1) {
    if (img.rows() == 1) {
      fy = 0.0;
    } else {
      y0 = img.rows() - 2;
      fy = 1.0;
    }
  }
  const Eigen::Index x1 = img.cols() == 1 ? x0 : x0 + 1;
  const Eigen::Index y1 = img.rows() == 1 ? y0 : y0 + 1;
  const double top = (1.0 - fx) * img(y0, x0) + fx * img(y0, x1);
  const double bottom = (1.0 - fx) * img(y1, x0) + fx * img(y1, x1);
  value = (1.0 - fy) * top + fy * bottom;
  return true;
}

WarpResult warp(const ImageBuffer& img, const Homography& h, int out_width, int out_height) {
  if (out_width <= 0 || out_height <= 0) fail(ErrorKind::InvalidArgument, "bad output size");
  if (!is_invertible(h)) fail(ErrorKind::InvalidArgument, "singular homography");
  const Homography inv = h.inverse();
  WarpResult out{ImageBuffer::Zero(out_height, out_width), Mask::Constant(out_height, out_width, false)};
  for (int r = 0; r < out_height; ++r) {
    const double y = r + 0.5;
    for (int c = 0; c < out_width; ++c) {
      const double x = c + 0.5;
      const double zx = inv(0, 0) * x + inv(0, 1) * y + inv(0, 2);
      const double zy = inv(1, 0) * x + inv(1, 1) * y + inv(1, 2);
      const double zw = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
      if (zw == 0.0) continue;
      double value = 0.0;
      if (sample_bilinear(img, zx / zw, zy / zw, value)) {
        out.image(r, c) = value;
        out.valid(r, c) = true;
      }
    }
  }
  return out;
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, const Mask& mask) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::InvalidArgument, "ssim: image dimensions differ");
  }
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    fail(ErrorKind::InvalidArgument, "ssim: mask dimensions differ");
  }
  constexpr int kWin = 8;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  constexpr double kN = kWin * kWin;
  double total = 0.0;
  long windows = 0;
  for (Eigen::Index r = 0; r + kWin <= a.rows(); r += kWin) {
    for (Eigen::Index c = 0; c + kWin <= a.cols(); c += kWin) {
      if (!mask.block(r, c, kWin, kWin).all()) continue;
      const auto wa = a.block(r, c, kWin, kWin);
      const auto wb = b.block(r, c, kWin, kWin);
      const double mu_a = wa.sum() / kN;
      const double mu_b = wb.sum() / kN;
      const double var_a = (wa - mu_a).square().sum() / kN;
      const double var_b = (wb - mu_b).square().sum() / kN;
      const double cov = ((wa - mu_a) * (wb - mu_b)).sum() / kN;
      total += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
               ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
      ++windows;
    }
  }
  if (windows == 0) fail(ErrorKind::NoOverlap, "ssim: no valid 8x8 window");
  return total / static_cast<double>(windows);
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  return ssim(a, b, full_mask(a.rows(), a.cols()));
}

Eigen::VectorXd zero_mean_normalize(const ImageBuffer& img, const Mask& mask) {
  if (mask.rows() != img.rows() || mask.cols() != img.cols()) {
    fail(ErrorKind::InvalidArgument, "mask dimensions differ from image");
  }
  const Eigen::Index n = mask.count();
  if (n < 2) fail(ErrorKind::DegenerateInput, "fewer than two masked pixels");
  Eigen::VectorXd v(n);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < img.rows(); ++r) {
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      if (mask(r, c)) v(k++) = img(r, c);
    }
  }
  v.array() -= v.mean();
  const double norm = v.norm();
  if (!(norm > 1e-12)) fail(ErrorKind::DegenerateInput, "constant image cannot be normalized");
  return v / norm;
}

ImageBuffer binomial_blur(const ImageBuffer& img) {
  static constexpr std::array<double, 5> kTaps{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const Eigen::Index rows = img.rows();
  const Eigen::Index cols = img.cols();
  ImageBuffer tmp(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int k = -2; k <= 2; ++k) {
        s += kTaps[k + 2] * img(r, std::clamp<Eigen::Index>(c + k, 0, cols - 1));
      }
      tmp(r, c) = s;
    }
  }
  ImageBuffer out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int k = -2; k <= 2; ++k) {
        s += kTaps[k + 2] * tmp(std::clamp<Eigen::Index>(r + k, 0, rows - 1), c);
      }
      out(r, c) = s;
    }
  }
  return out;
}

Homography normalize_homography(const Homography& h) {
  if (!h.allFinite() || std::abs(h(2, 2)) < 1e-15) {
    fail(ErrorKind::InvalidArgument, "homography cannot be normalized");
  }
  return h / h(2, 2);
}

bool is_invertible(const Homography& h) {
  return h.allFinite() && std::abs(h.determinant()) > 1e-12;
}

Homography translation(double tx, double ty) {
  Homography h = Homography::Identity();
  h(0, 2) = tx;
  h(1, 2) = ty;
  return h;
}

Homography upscale_homography(const Homography& h_ds, int factor) {
  const Eigen::Vector3d s(factor, factor, 1.0);
  return normalize_homography(s.asDiagonal() * h_ds * s.cwiseInverse().asDiagonal());
}

Homography downscale_homography(const Homography& h_full, int factor) {
  const Eigen::Vector3d s(factor, factor, 1.0);
  return normalize_homography(s.cwiseInverse().asDiagonal() * h_full * s.asDiagonal());
}

double corner_error(const Homography& a, const Homography& b, int width, int height) {
  const std::array<Eigen::Vector2d, 4> corners{
      Eigen::Vector2d(0, 0), Eigen::Vector2d(width, 0), Eigen::Vector2d(0, height),
      Eigen::Vector2d(width, height)};
  double sum = 0.0;
  for (const auto& p : corners) sum += (apply(a, p) - apply(b, p)).norm();
  return sum / 4.0;
}

}  // namespace urbanflow
