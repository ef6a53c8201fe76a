#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "urbanflow/error.hpp"

namespace urbanflow {

// Rows index y, columns index x. Pixel (c, r) covers [c, c+1) x [r, r+1), so its
// center sits at (c + 0.5, r + 0.5). Block-mean down-sampling by f then maps
// exactly through diag(f, f, 1).
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ImageBuffer = Image<double>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Projective map from source pixel coordinates to destination pixel coordinates.
using Homography = Eigen::Matrix3d;

struct WarpResult {
  ImageBuffer image;
  Mask valid;
};

/// Throws InvalidArgument unless every intensity lies in [0, 1].
void validate_intensity(const ImageBuffer& img);

ImageBuffer downsample(const ImageBuffer& img, int factor);

/// Inverse-mapped bilinear warp: out(p) = img(h^-1 p). Pixels whose source
/// falls outside the image are 0 and marked invalid.
WarpResult warp(const ImageBuffer& img, const Homography& h, int out_width, int out_height);

inline WarpResult warp(const ImageBuffer& img, const Homography& h) {
  return warp(img, h, static_cast<int>(img.cols()), static_cast<int>(img.rows()));
}

/// Mean SSIM over 8x8 non-overlapping windows lying fully inside `mask`.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const Mask& mask);
double ssim(const ImageBuffer& a, const ImageBuffer& b);

/// Masked pixels, in row-major order, shifted to zero mean and scaled to unit norm.
Eigen::VectorXd zero_mean_normalize(const ImageBuffer& img, const Mask& mask);

inline Mask full_mask(Eigen::Index rows, Eigen::Index cols) {
  return Mask::Constant(rows, cols, true);
}

/// Bilinear sample at continuous coordinates; returns false outside the image.
bool sample_bilinear(const ImageBuffer& img, double x, double y, double& value);

/// Separable [1 4 6 4 1]/16 smoothing with edge clamping.
ImageBuffer binomial_blur(const ImageBuffer& img);

// ---- homography helpers ---------------------------------------------------

/// Scales so that h(2,2) == 1. Throws InvalidArgument when that entry vanishes.
Homography normalize_homography(const Homography& h);

bool is_invertible(const Homography& h);

inline Eigen::Vector2d apply(const Homography& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  return q.hnormalized();
}

Homography translation(double tx, double ty);

/// Homography estimated on images down-sampled by `factor`, expressed at full resolution.
Homography upscale_homography(const Homography& h_ds, int factor);
Homography downscale_homography(const Homography& h_full, int factor);

/// Mean distance between the images of the four image corners under a and b.
double corner_error(const Homography& a, const Homography& b, int width, int height);

// ---- PGM (P5) -------------------------------------------------------------

ImageBuffer read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const ImageBuffer& img,
               const std::vector<std::string>& comments = {});

}  // namespace urbanflow
