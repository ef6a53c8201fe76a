#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "urbanflow/stabilize.hpp"

namespace urbanflow {
namespace {

// Similarity taking the centroid to the origin and the mean distance to sqrt(2).
Eigen::Matrix3d normalizing_transform(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return t;
}

bool collinear(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const Eigen::Vector2d u = b - a;
  const Eigen::Vector2d v = c - a;
  const double cross = u.x() * v.y() - u.y() * v.x();
  return std::abs(cross) <= 1e-9 * std::max(1.0, u.norm() * v.norm());
}

bool degenerate_sample(std::span<const Correspondence> m, const std::array<std::size_t, 4>& idx) {
  for (int skip = 0; skip < 4; ++skip) {
    std::array<std::size_t, 3> t{};
    int k = 0;
    for (int i = 0; i < 4; ++i) {
      if (i != skip) t[static_cast<std::size_t>(k++)] = idx[static_cast<std::size_t>(i)];
    }
    if (collinear(m[t[0]].p_ref, m[t[1]].p_ref, m[t[2]].p_ref) ||
        collinear(m[t[0]].p_tgt, m[t[1]].p_tgt, m[t[2]].p_tgt)) {
      return true;
    }
  }
  return false;
}

struct Consensus {
  std::vector<std::size_t> inliers;
  double error_sum = 0.0;
};

Consensus score_model(const Homography& h, std::span<const Correspondence> matches, double threshold) {
  Consensus c;
  if (!is_invertible(h)) return c;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const double e = symmetric_transfer_error(h, matches[i]);
    if (e <= threshold) {
      c.inliers.push_back(i);
      c.error_sum += e;
    }
  }
  return c;
}

bool better(const Consensus& a, const Consensus& b) {
  if (a.inliers.size() != b.inliers.size()) return a.inliers.size() > b.inliers.size();
  return a.error_sum < b.error_sum;
}

}  // namespace

Homography dlt_homography(std::span<const Correspondence> matches) {
  if (matches.size() < 4) fail(ErrorKind::InsufficientFeatures, "DLT needs at least 4 correspondences");
  std::vector<Eigen::Vector2d> src(matches.size());
  std::vector<Eigen::Vector2d> dst(matches.size());
  for (std::size_t i = 0; i < matches.size(); ++i) {
    src[i] = matches[i].p_tgt;
    dst[i] = matches[i].p_ref;
  }
  const Eigen::Matrix3d ts = normalizing_transform(src);
  const Eigen::Matrix3d td = normalizing_transform(dst);

  Eigen::MatrixXd a(2 * matches.size(), 9);
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Eigen::Vector3d x = ts * src[i].homogeneous();
    const Eigen::Vector3d y = td * dst[i].homogeneous();
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << 0, 0, 0, -y.z() * x.transpose(), y.y() * x.transpose();
    a.row(r + 1) << y.z() * x.transpose(), 0, 0, 0, -y.x() * x.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(8);
  Homography hn;
  hn << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  const Homography h = td.inverse() * hn * ts;
  if (!is_invertible(h) || std::abs(h(2, 2)) < 1e-15) {
    fail(ErrorKind::EstimationFailed, "DLT produced a degenerate homography");
  }
  return normalize_homography(h);
}

double symmetric_transfer_error(const Homography& h, const Correspondence& m) {
  const Eigen::Vector3d fwd = h * m.p_tgt.homogeneous();
  const Eigen::Vector3d bwd = h.inverse() * m.p_ref.homogeneous();
  if (std::abs(fwd.z()) < 1e-15 || std::abs(bwd.z()) < 1e-15) {
    return std::numeric_limits<double>::infinity();
  }
  const double df = (fwd.hnormalized() - m.p_ref).squaredNorm();
  const double db = (bwd.hnormalized() - m.p_tgt).squaredNorm();
  return std::sqrt(0.5 * (df + db));
}

RansacResult ransac_homography(std::span<const Correspondence> matches, const StabilizerConfig& cfg) {
  if (matches.size() < 4) fail(ErrorKind::InsufficientFeatures, "RANSAC needs at least 4 correspondences");
  std::mt19937_64 rng(cfg.ransac_seed);
  const std::size_t n = matches.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  Consensus best;
  Homography best_h = Homography::Identity();
  long needed = cfg.ransac_iters;
  for (long it = 0; it < std::min<long>(needed, cfg.ransac_iters); ++it) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t k = 0; k < 4; ++k) {
      std::size_t candidate = 0;
      do {
        candidate = pick(rng);
      } while (std::find(idx.begin(), idx.begin() + static_cast<long>(k), candidate) !=
               idx.begin() + static_cast<long>(k));
      idx[k] = candidate;
    }
    if (degenerate_sample(matches, idx)) continue;
    const std::array<Correspondence, 4> sample{matches[idx[0]], matches[idx[1]], matches[idx[2]], matches[idx[3]]};
    Homography h;
    try {
      h = dlt_homography(sample);
    } catch (const Error&) {
      continue;
    }
    Consensus c = score_model(h, matches, cfg.ransac_inlier_px);
    if (better(c, best)) {
      best = std::move(c);
      best_h = h;
      const double w = static_cast<double>(best.inliers.size()) / static_cast<double>(n);
      const double p_all_inliers = std::pow(w, 4.0);
      if (p_all_inliers >= 1.0 - 1e-12) {
        needed = it + 1;
      } else if (p_all_inliers > 0.0) {
        const double k = std::log(1.0 - 0.999) / std::log(1.0 - p_all_inliers);
        needed = std::max<long>(it + 1, static_cast<long>(std::ceil(k)));
      }
    }
  }
  if (best.inliers.size() < 4) fail(ErrorKind::EstimationFailed, "no homography with 4 or more inliers");

  // Refit on the consensus set; keep the refit while it does not lose support.
  for (int round = 0; round < 3; ++round) {
    std::vector<Correspondence> support;
    support.reserve(best.inliers.size());
    for (std::size_t i : best.inliers) support.push_back(matches[i]);
    Homography refit;
    try {
      refit = dlt_homography(support);
    } catch (const Error&) {
      break;
    }
    Consensus c = score_model(refit, matches, cfg.ransac_inlier_px);
    if (c.inliers.size() < best.inliers.size()) break;
    const bool changed = c.inliers != best.inliers;
    best = std::move(c);
    best_h = refit;
    if (!changed) break;
  }
  return {best_h, best.inliers};
}

}  // namespace urbanflow
