#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "urbanflow/stabilize.hpp"

using namespace urbanflow;

namespace {

// Random 8x8 blocks, blurred twice: plenty of corners and gradients.
ImageBuffer blocky(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.15, 0.75);
  const int br = rows / 8 + 1, bc = cols / 8 + 1;
  std::vector<double> v(static_cast<std::size_t>(br * bc));
  for (double& x : v) x = u(rng);
  ImageBuffer img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) img(r, c) = v[static_cast<std::size_t>((r / 8) * bc + c / 8)];
  return binomial_blur(binomial_blur(img));
}

ImageBuffer checkerboard(int squares_x, int squares_y, int size, int margin) {
  ImageBuffer img = ImageBuffer::Constant(squares_y * size + 2 * margin, squares_x * size + 2 * margin, 0.5);
  for (int r = 0; r < squares_y * size; ++r)
    for (int c = 0; c < squares_x * size; ++c)
      img(margin + r, margin + c) = ((r / size + c / size) % 2 == 0) ? 0.1 : 0.9;
  return img;
}

// Solves the 8 unknowns of H (h33 = 1) from exactly four correspondences.
Homography four_point_oracle(const std::vector<Correspondence>& m) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = m[i].p_tgt.x(), y = m[i].p_tgt.y();
    const double u = m[i].p_ref.x(), v = m[i].p_ref.y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> s = a.fullPivLu().solve(b);
  Homography h;
  h << s(0), s(1), s(2), s(3), s(4), s(5), s(6), s(7), 1.0;
  return h;
}

double rel_frobenius(const Homography& a, const Homography& b) {
  const Homography na = normalize_homography(a), nb = normalize_homography(b);
  return (na - nb).norm() / nb.norm();
}

Homography sample_h() {
  Homography h;
  h << 1.02, -0.03, 4.0, 0.025, 0.98, -3.0, 5e-5, -3e-5, 1.0;
  return h;
}

}  // namespace

TEST_CASE("corner detection on a checkerboard") {
  const ImageBuffer img = checkerboard(5, 3, 16, 16);
  const auto kps = detect_corners(img, 100, 6);
  std::vector<Eigen::Vector2d> truth;
  for (int j = 1; j < 3; ++j)
    for (int i = 1; i < 5; ++i) truth.emplace_back(16.0 + 16.0 * i, 16.0 + 16.0 * j);
  REQUIRE(truth.size() == 8);
  int found = 0;
  for (const auto& t : truth) {
    bool hit = false;
    for (const auto& k : kps) hit = hit || (k.pos - t).norm() <= 1.0;
    found += hit;
  }
  CHECK(found == 8);
}

TEST_CASE("matching") {
  const ImageBuffer ref = blocky(128, 128, 4);
  const auto self = detect_and_match(ref, ref);
  REQUIRE(self.size() >= 4);
  for (const auto& m : self) CHECK((m.p_ref - m.p_tgt).norm() == 0.0);

  const ImageBuffer shifted = warp(ref, translation(5, 0)).image;
  const auto moved = detect_and_match(ref, shifted);
  int good = 0;
  for (const auto& m : moved) good += ((m.p_tgt - m.p_ref) - Eigen::Vector2d(5, 0)).norm() <= 1.0;
  CHECK(good >= 0.9 * static_cast<double>(moved.size()));

  CHECK_THROWS_AS(detect_and_match(ImageBuffer::Constant(64, 64, 0.5), ImageBuffer::Constant(64, 64, 0.5)), Error);
}

TEST_CASE("DLT and RANSAC") {
  const Homography h = sample_h();
  std::vector<Correspondence> four;
  for (const Eigen::Vector2d& p : {Eigen::Vector2d(10, 12), Eigen::Vector2d(300, 20), Eigen::Vector2d(290, 250),
                                  Eigen::Vector2d(15, 240)}) {
    four.push_back({apply(h, p), p});
  }
  CHECK(rel_frobenius(dlt_homography(four), h) <= 1e-6);
  CHECK(rel_frobenius(dlt_homography(four), four_point_oracle(four)) <= 1e-6);

  StabilizerConfig cfg;
  const RansacResult r4 = ransac_homography(four, cfg);
  CHECK(rel_frobenius(r4.h, four_point_oracle(four)) <= 1e-6);

  std::vector<Correspondence> same;
  for (int i = 0; i < 10; ++i) same.push_back({Eigen::Vector2d(7.0 * i, 3.0 * i * i), Eigen::Vector2d(7.0 * i, 3.0 * i * i)});
  same.push_back({Eigen::Vector2d(5, 90), Eigen::Vector2d(5, 90)});
  CHECK(rel_frobenius(ransac_homography(same, cfg).h, Homography::Identity()) <= 1e-9);

  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 400.0);
  std::vector<Correspondence> mixed;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d p(u(rng), u(rng));
    mixed.push_back({i < 70 ? apply(h, p) : Eigen::Vector2d(u(rng), u(rng)), p});
  }
  const RansacResult rr = ransac_homography(mixed, cfg);
  std::vector<std::size_t> expect(70);
  for (std::size_t i = 0; i < 70; ++i) expect[i] = i;
  CHECK(rr.inliers == expect);

  CHECK_THROWS_AS(dlt_homography(std::span<const Correspondence>(four.data(), 3)), Error);
}

TEST_CASE("ECC refinement") {
  StabilizerConfig cfg;
  const ImageBuffer ref = blocky(96, 96, 9);

  const EccResult same = ecc_refine(ref, ref, Homography::Identity(), cfg);
  CHECK(same.iterations <= 2);
  CHECK(same.score >= 0.99);

  // Both images cropped from one larger texture, so no border is undefined.
  const ImageBuffer big = blocky(112, 112, 9);
  const ImageBuffer ref_crop = big.block(8, 8, 96, 96);
  const ImageBuffer shifted = warp(big, translation(2, 0)).image.block(8, 8, 96, 96);
  const EccResult e = ecc_refine(ref_crop, shifted, Homography::Identity(), cfg);
  CHECK(corner_error(e.h, translation(-2, 0), 96, 96) <= 0.1);

  const ImageBuffer brighter = 1.2 * shifted + 0.05;
  REQUIRE(brighter.maxCoeff() <= 1.0);
  const EccResult eb = ecc_refine(ref_crop, brighter, Homography::Identity(), cfg);
  CHECK(corner_error(eb.h, e.h, 96, 96) <= 0.05);
}

TEST_CASE("stabilizer controller") {
  StabilizerConfig cfg;
  cfg.ssim_threshold = 0.9;
  cfg.ds_factor = 1;
  const ImageBuffer base = blocky(128, 128, 2);

  const std::vector<ImageBuffer> still(6, base);
  const StreamResult s = stabilize_stream(still, cfg);
  CHECK(s.final_state.alignment_count == 0);
  for (const auto& f : s.frames) {
    CHECK(f.h.isIdentity(0.0));
    CHECK(f.ssim_score == 1.0);
  }

  std::vector<ImageBuffer> moved{base};
  const ImageBuffer shifted = warp(base, translation(3, 0)).image;
  for (int i = 0; i < 5; ++i) moved.push_back(shifted);
  const StreamResult m = stabilize_stream(moved, cfg);
  CHECK(m.final_state.alignment_count == 1);
  CHECK(m.frames[1].aligned);
  for (std::size_t i = 2; i < m.frames.size(); ++i) {
    CHECK_FALSE(m.frames[i].aligned);
    CHECK(m.frames[i].h.isApprox(m.frames[1].h, 1e-12));
  }
  CHECK(corner_error(m.frames.back().h, translation(-3, 0), 128, 128) <= 0.2);
  for (const auto& snap : m.trace) {
    CHECK(snap.last_score >= -1.0);
    CHECK(snap.last_score <= 1.0);
  }
}

TEST_CASE("raw stream and homography log round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "urbanflow_test_stabilize";
  std::filesystem::create_directories(dir);
  std::vector<ImageBuffer> frames{ImageBuffer::Constant(8, 16, 0.2), ImageBuffer::Constant(8, 16, 1.0)};
  write_raw_stream(dir / "s.raw", frames);
  const auto back = read_raw_stream(dir / "s.raw");
  REQUIRE(back.size() == 2);
  CHECK(std::abs(back[0](3, 3) - 51.0 / 255.0) < 1e-12);
  CHECK(back[1](7, 15) == 1.0);

  std::vector<FrameResult> log(2);
  log[1].frame_index = 1;
  log[1].h = sample_h();
  log[1].aligned = true;
  write_homography_log(dir / "h.csv", log, {"test"});
  const auto hl = read_homography_log(dir / "h.csv");
  REQUIRE(hl.size() == 2);
  CHECK(hl[1].h.isApprox(sample_h(), 1e-12));
  CHECK(hl[1].aligned);
  std::filesystem::remove_all(dir);
}
