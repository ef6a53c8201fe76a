#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "urbanflow/imaging.hpp"

using namespace urbanflow;

namespace {

ImageBuffer random_image(int rows, int cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ImageBuffer img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) img(r, c) = u(rng);
  return img;
}

// Smooth pattern so bilinear round trips stay close.
ImageBuffer smooth_image(int rows, int cols) {
  ImageBuffer img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      img(r, c) = 0.5 + 0.2 * std::sin(0.15 * c) * std::cos(0.11 * r) + 0.1 * std::sin(0.05 * (r + c));
  return img;
}

// Per-window SSIM written out with plain loops over pixels.
double ssim_oracle(const ImageBuffer& a, const ImageBuffer& b) {
  const double c1 = 1e-4, c2 = 9e-4;
  double sum = 0.0;
  int count = 0;
  for (int r0 = 0; r0 + 8 <= a.rows(); r0 += 8) {
    for (int c0 = 0; c0 + 8 <= a.cols(); c0 += 8) {
      double ma = 0, mb = 0;
      for (int r = r0; r < r0 + 8; ++r)
        for (int c = c0; c < c0 + 8; ++c) {
          ma += a(r, c);
          mb += b(r, c);
        }
      ma /= 64;
      mb /= 64;
      double va = 0, vb = 0, cov = 0;
      for (int r = r0; r < r0 + 8; ++r)
        for (int c = c0; c < c0 + 8; ++c) {
          va += (a(r, c) - ma) * (a(r, c) - ma);
          vb += (b(r, c) - mb) * (b(r, c) - mb);
          cov += (a(r, c) - ma) * (b(r, c) - mb);
        }
      va /= 64;
      vb /= 64;
      cov /= 64;
      sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return sum / count;
}

}  // namespace

TEST_CASE("downsample") {
  const ImageBuffer img = random_image(64, 64, 3);
  CHECK((downsample(img, 1) == img).all());

  const ImageBuffer flat = ImageBuffer::Constant(4, 4, 0.5);
  const ImageBuffer d2 = downsample(flat, 2);
  CHECK(d2.rows() == 2);
  CHECK(d2.cols() == 2);
  CHECK((d2 == 0.5).all());

  const ImageBuffer d8 = downsample(img, 8);
  REQUIRE(d8.rows() == 8);
  double s = 0.0;
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) s += img(r, c);
  CHECK(d8(0, 0) == doctest::Approx(s / 64.0).epsilon(1e-14));

  CHECK_THROWS_AS(downsample(img, 3), Error);
  CHECK_THROWS_AS(downsample(ImageBuffer::Constant(4, 4, 0.1), 8), Error);
}

TEST_CASE("warp") {
  const ImageBuffer img = random_image(32, 40, 5);
  const WarpResult id = warp(img, Homography::Identity());
  CHECK(id.valid.all());
  CHECK((id.image - img).abs().maxCoeff() < 1e-12);

  const WarpResult sh = warp(img, translation(3, 0));
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      if (c >= 3) {
        CHECK(sh.valid(r, c));
        CHECK(sh.image(r, c) == doctest::Approx(img(r, c - 3)).epsilon(1e-12));
      } else {
        CHECK_FALSE(sh.valid(r, c));
        CHECK(sh.image(r, c) == 0.0);
      }
    }
  }

  Homography h;
  h << 1.01, 0.02, 1.5, -0.015, 0.99, -2.0, 2e-5, -1e-5, 1.0;
  const ImageBuffer sm = smooth_image(96, 96);
  const WarpResult fwd = warp(sm, h);
  const WarpResult back = warp(fwd.image, h.inverse());
  double worst = 0.0;
  for (int r = 4; r < 92; ++r)
    for (int c = 4; c < 92; ++c)
      if (back.valid(r, c)) worst = std::max(worst, std::abs(back.image(r, c) - sm(r, c)));
  CHECK(worst <= 0.02);

  // Composition equals the product on interior pixels.
  const Homography g = translation(-1.2, 0.7);
  const WarpResult twice = warp(warp(sm, h).image, g);
  const WarpResult once = warp(sm, g * h);
  double comp = 0.0;
  for (int r = 8; r < 88; ++r)
    for (int c = 8; c < 88; ++c)
      if (twice.valid(r, c) && once.valid(r, c)) comp = std::max(comp, std::abs(twice.image(r, c) - once.image(r, c)));
  CHECK(comp <= 0.02);

  Homography singular = Homography::Zero();
  singular(2, 2) = 1.0;
  CHECK_THROWS_AS(warp(sm, singular), Error);
}

TEST_CASE("ssim") {
  const ImageBuffer a = random_image(64, 64, 11);
  const ImageBuffer b = random_image(64, 64, 12);
  CHECK(ssim(a, a) == 1.0);
  const ImageBuffer flat = ImageBuffer::Constant(16, 16, 0.5);
  CHECK(ssim(flat, flat) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) <= 1e-10);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) <= 1e-12);

  CHECK_THROWS_AS(ssim(a, ImageBuffer::Zero(32, 32)), Error);
  Mask none = Mask::Constant(64, 64, false);
  try {
    ssim(a, b, none);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoOverlap);
  }
}

TEST_CASE("zero-mean normalization") {
  ImageBuffer two(1, 2);
  two << 0.0, 1.0;
  const Eigen::VectorXd v = zero_mean_normalize(two, full_mask(1, 2));
  CHECK(v(0) == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(v(1) == doctest::Approx(1.0 / std::sqrt(2.0)));

  const ImageBuffer img = random_image(20, 20, 8, 0.0, 0.8);
  const ImageBuffer affine = 1.2 * img + 0.05;
  const Eigen::VectorXd x = zero_mean_normalize(img, full_mask(20, 20));
  const Eigen::VectorXd y = zero_mean_normalize(affine, full_mask(20, 20));
  CHECK((x - y).cwiseAbs().maxCoeff() <= 1e-10);

  try {
    zero_mean_normalize(ImageBuffer::Constant(4, 4, 0.3), full_mask(4, 4));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateInput);
  }
}

TEST_CASE("homography helpers") {
  Homography h;
  h << 2, 0.1, 3, 0.05, 1.8, -4, 1e-4, 2e-4, 2;
  const Homography n = normalize_homography(h);
  CHECK(n(2, 2) == 1.0);
  CHECK(((n - h / 2.0).cwiseAbs().maxCoeff()) < 1e-15);

  // Down-sampling by f is diag(f, f, 1) on pixel-corner coordinates.
  const Homography up = upscale_homography(h / 2.0, 4);
  const Eigen::Vector2d p(13.0, 27.0);
  CHECK((apply(up, p) - 4.0 * apply(h, p / 4.0)).norm() < 1e-9);
  CHECK((normalize_homography(downscale_homography(up, 4)) - normalize_homography(h)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(corner_error(h, h, 100, 80) == 0.0);
  CHECK(corner_error(translation(0, 0), translation(3, 4), 100, 80) == doctest::Approx(5.0));
}

TEST_CASE("pgm round trip") {
  const auto path = std::filesystem::temp_directory_path() / "urbanflow_test_imaging.pgm";
  ImageBuffer img(3, 4);
  for (int i = 0; i < 12; ++i) img.data()[i] = (i * 20) / 255.0;
  write_pgm(path, img, {"note"});
  const ImageBuffer back = read_pgm(path);
  CHECK(((back - img).abs().maxCoeff()) < 1e-12);
  std::filesystem::remove(path);

  ImageBuffer bad = img;
  bad(0, 0) = 1.5;
  CHECK_THROWS_AS(validate_intensity(bad), Error);
}
