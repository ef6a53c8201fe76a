#include <algorithm>
#include <cmath>

#include "urbanflow/stabilize.hpp"

namespace urbanflow {
namespace {

constexpr int kNmsRadius = 3;
constexpr int kTensorRadius = 2;

ImageBuffer min_eigen_response(const ImageBuffer& img) {
  const Eigen::Index rows = img.rows();
  const Eigen::Index cols = img.cols();
  ImageBuffer gxx = ImageBuffer::Zero(rows, cols);
  ImageBuffer gyy = ImageBuffer::Zero(rows, cols);
  ImageBuffer gxy = ImageBuffer::Zero(rows, cols);
  for (Eigen::Index r = 1; r + 1 < rows; ++r) {
    for (Eigen::Index c = 1; c + 1 < cols; ++c) {
      const double gx = 0.5 * (img(r, c + 1) - img(r, c - 1));
      const double gy = 0.5 * (img(r + 1, c) - img(r - 1, c));
      gxx(r, c) = gx * gx;
      gyy(r, c) = gy * gy;
      gxy(r, c) = gx * gy;
    }
  }
  // Structure tensor summed with 5x5 binomial weights.
  ImageBuffer response = ImageBuffer::Zero(rows, cols);
  const int k = kTensorRadius;
  Eigen::Matrix<double, 2 * kTensorRadius + 1, 1> w1;
  w1 << 1, 4, 6, 4, 1;
  const Eigen::Array<double, 2 * kTensorRadius + 1, 2 * kTensorRadius + 1> win = (w1 * w1.transpose() / 256.0).array();
  for (Eigen::Index r = k + 1; r + k + 1 < rows; ++r) {
    for (Eigen::Index c = k + 1; c + k + 1 < cols; ++c) {
      const double a = (gxx.block<2 * kTensorRadius + 1, 2 * kTensorRadius + 1>(r - k, c - k) * win).sum();
      const double b = (gxy.block<2 * kTensorRadius + 1, 2 * kTensorRadius + 1>(r - k, c - k) * win).sum();
      const double d = (gyy.block<2 * kTensorRadius + 1, 2 * kTensorRadius + 1>(r - k, c - k) * win).sum();
      const double half_trace = 0.5 * (a + d);
      const double disc = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
      response(r, c) = half_trace - disc;
    }
  }
  return response;
}

double parabola_offset(double left, double center, double right) {
  const double denom = left - 2.0 * center + right;
  if (std::abs(denom) < 1e-15) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

struct Patch {
  Eigen::Vector2d pos;
  Eigen::VectorXd normalized;
};

std::vector<Patch> extract_patches(const ImageBuffer& img, const std::vector<Keypoint>& kps, int size) {
  const int half = size / 2;
  std::vector<Patch> out;
  out.reserve(kps.size());
  for (const auto& kp : kps) {
    const auto c = static_cast<Eigen::Index>(std::floor(kp.pos.x()));
    const auto r = static_cast<Eigen::Index>(std::floor(kp.pos.y()));
    if (r - half < 0 || c - half < 0 || r + half >= img.rows() || c + half >= img.cols()) continue;
    ImageBuffer block = img.block(r - half, c - half, size, size);
    Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(block.data(), block.size());
    v.array() -= v.mean();
    const double n = v.norm();
    if (n < 1e-9) continue;
    out.push_back({kp.pos, v / n});
  }
  return out;
}

std::vector<Correspondence> match_impl(const ImageBuffer& ref, const ImageBuffer& tgt,
                                       const Mask* tgt_valid, const MatchOptions& opts) {
  if (ref.rows() != tgt.rows() || ref.cols() != tgt.cols()) {
    fail(ErrorKind::InvalidArgument, "detect_and_match: image dimensions differ");
  }
  if (opts.patch_size < 3 || opts.patch_size % 2 == 0) {
    fail(ErrorKind::InvalidArgument, "patch size must be odd and >= 3");
  }
  const int border = opts.patch_size / 2 + 1;
  const auto ref_patches =
      extract_patches(ref, detect_corners(ref, opts.max_keypoints, border), opts.patch_size);
  const auto tgt_patches =
      extract_patches(tgt, detect_corners(tgt, opts.max_keypoints, border, tgt_valid), opts.patch_size);

  const std::size_t nr = ref_patches.size();
  const std::size_t nt = tgt_patches.size();
  std::vector<int> best_for_ref(nr, -1);
  std::vector<double> best_ref_score(nr, -2.0);
  std::vector<int> best_for_tgt(nt, -1);
  std::vector<double> best_tgt_score(nt, -2.0);
  const double max_d2 = opts.max_displacement * opts.max_displacement;
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < nt; ++j) {
      if ((ref_patches[i].pos - tgt_patches[j].pos).squaredNorm() > max_d2) continue;
      const double s = ref_patches[i].normalized.dot(tgt_patches[j].normalized);
      if (s > best_ref_score[i]) {
        best_ref_score[i] = s;
        best_for_ref[i] = static_cast<int>(j);
      }
      if (s > best_tgt_score[j]) {
        best_tgt_score[j] = s;
        best_for_tgt[j] = static_cast<int>(i);
      }
    }
  }
  std::vector<Correspondence> matches;
  for (std::size_t i = 0; i < nr; ++i) {
    const int j = best_for_ref[i];
    if (j < 0 || best_for_tgt[static_cast<std::size_t>(j)] != static_cast<int>(i)) continue;
    if (best_ref_score[i] < opts.min_ncc) continue;
    matches.push_back({ref_patches[i].pos, tgt_patches[static_cast<std::size_t>(j)].pos});
  }
  if (matches.size() < 4) {
    fail(ErrorKind::InsufficientFeatures,
         "only " + std::to_string(matches.size()) + " feature matches found");
  }
  return matches;
}

}  // namespace

std::vector<Keypoint> detect_corners(const ImageBuffer& img, int max_count, int border, const Mask* valid) {
  const ImageBuffer response = min_eigen_response(img);
  const double peak = response.maxCoeff();
  if (!(peak > 0.0)) return {};
  const double floor_value = 0.01 * peak;
  const Eigen::Index rows = img.rows();
  const Eigen::Index cols = img.cols();
  const int margin = std::max(border, kTensorRadius + 2);

  // Distance (in pixels) to the nearest invalid pixel is approximated by
  // requiring the whole patch window to be valid.
  auto window_valid = [&](Eigen::Index r, Eigen::Index c) {
    if (valid == nullptr) return true;
    return valid->block(r - margin, c - margin, 2 * margin + 1, 2 * margin + 1).all();
  };

  std::vector<Keypoint> kps;
  for (Eigen::Index r = margin; r + margin < rows; ++r) {
    for (Eigen::Index c = margin; c + margin < cols; ++c) {
      const double v = response(r, c);
      if (v < floor_value) continue;
      bool is_max = true;
      for (int dr = -kNmsRadius; dr <= kNmsRadius && is_max; ++dr) {
        for (int dc = -kNmsRadius; dc <= kNmsRadius; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const Eigen::Index rr = r + dr;
          const Eigen::Index cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
          const double w = response(rr, cc);
          // Plateau ties resolve to the first pixel in raster order.
          if (w > v || (w == v && (dr < 0 || (dr == 0 && dc < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max || !window_valid(r, c)) continue;
      const double ox = parabola_offset(response(r, c - 1), v, response(r, c + 1));
      const double oy = parabola_offset(response(r - 1, c), v, response(r + 1, c));
      kps.push_back({Eigen::Vector2d(c + 0.5 + ox, r + 0.5 + oy), v});
    }
  }
  std::stable_sort(kps.begin(), kps.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
  if (max_count >= 0 && kps.size() > static_cast<std::size_t>(max_count)) {
    kps.resize(static_cast<std::size_t>(max_count));
  }
  return kps;
}

std::vector<Correspondence> detect_and_match(const ImageBuffer& ref, const ImageBuffer& tgt,
                                             const MatchOptions& opts) {
  return match_impl(ref, tgt, nullptr, opts);
}

std::vector<Correspondence> detect_and_match(const ImageBuffer& ref, const ImageBuffer& tgt,
                                             const Mask& tgt_valid, const MatchOptions& opts) {
  if (tgt_valid.rows() != tgt.rows() || tgt_valid.cols() != tgt.cols()) {
    fail(ErrorKind::InvalidArgument, "detect_and_match: mask dimensions differ");
  }
  return match_impl(ref, tgt, &tgt_valid, opts);
}

}  // namespace urbanflow
