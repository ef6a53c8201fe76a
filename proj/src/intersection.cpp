#include "urbanflow/intersection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "urbanflow/error.hpp"

namespace urbanflow {
namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Piece {
  bool arc = false;
  Eigen::Vector2d start;   // line start / arc center
  Eigen::Vector2d dir;     // line direction
  double radius = 0.0;
  double angle0 = 0.0;     // arc start angle
  double turn = 1.0;       // +1 counter-clockwise, -1 clockwise
  double length = 0.0;

  Eigen::Vector2d at(double s) const {
    if (!arc) return start + s * dir;
    const double a = angle0 + turn * s / radius;
    return start + radius * Eigen::Vector2d(std::cos(a), std::sin(a));
  }
};

Piece line(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  Piece p;
  p.start = a;
  p.length = (b - a).norm();
  p.dir = p.length > 0.0 ? Eigen::Vector2d((b - a) / p.length) : Eigen::Vector2d(0.0, 1.0);
  return p;
}

Piece quarter_arc(const Eigen::Vector2d& center, double radius, double angle0, double turn) {
  Piece p;
  p.arc = true;
  p.start = center;
  p.radius = radius;
  p.angle0 = angle0;
  p.turn = turn;
  p.length = radius * std::numbers::pi / 2.0;
  return p;
}

std::vector<Eigen::Vector2d> sample(const std::vector<Piece>& pieces, double spacing) {
  double total = 0.0;
  for (const auto& p : pieces) total += p.length;
  const auto n = static_cast<std::size_t>(std::floor(total / spacing + 1e-9)) + 1;
  std::vector<Eigen::Vector2d> out;
  out.reserve(n);
  std::size_t k = 0;
  double offset = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) * spacing;
    while (k + 1 < pieces.size() && s > offset + pieces[k].length) {
      offset += pieces[k].length;
      ++k;
    }
    out.push_back(pieces[k].at(std::min(s - offset, pieces[k].length)));
  }
  return out;
}

}  // namespace

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::GS: return "GS";
    case Direction::TL: return "TL";
    case Direction::TR: return "TR";
  }
  return "?";
}

Direction direction_from_string(std::string_view s) {
  if (s == "GS") return Direction::GS;
  if (s == "TL") return Direction::TL;
  if (s == "TR") return Direction::TR;
  fail(ErrorKind::InvalidArgument, "unknown direction '" + std::string(s) + "'");
}

void IntersectionGeometry::validate() const {
  if (!(lane_width > 0.0) || lanes_per_side < 1 || !(arm_length > 0.0) || !(box_margin > 0.0)) {
    fail(ErrorKind::InvalidGeometry, "intersection dimensions must be positive");
  }
}

Eigen::Matrix2d arm_rotation(Arm approach) {
  const double a = static_cast<int>(approach) * std::numbers::pi / 2.0;
  Eigen::Matrix2d r;
  const double c = std::round(std::cos(a));
  const double s = std::round(std::sin(a));
  r << c, -s, s, c;
  return r;
}

Arm exit_arm(Arm approach, Direction dir) {
  const int k = dir == Direction::GS ? 2 : dir == Direction::TL ? 3 : 1;
  return static_cast<Arm>((static_cast<int>(approach) + k) % 4);
}

int approach_lane(const IntersectionGeometry& geom, Arm approach, const Eigen::Vector2d& p) {
  const Eigen::Vector2d c = arm_rotation(approach).transpose() * p;
  const int lane = static_cast<int>(std::lround(c.x() / geom.lane_width + 0.5));
  return std::clamp(lane, 1, geom.lanes_per_side);
}

ReferenceTrajectory reference_trajectory(const IntersectionGeometry& geom, Arm approach, Direction dir,
                                         std::optional<int> lane_in, std::optional<int> lane_out) {
  geom.validate();
  if (!geom.arms[static_cast<std::size_t>(approach)]) {
    fail(ErrorKind::InvalidGeometry, "approach arm does not exist");
  }
  if (!geom.arms[static_cast<std::size_t>(exit_arm(approach, dir))]) {
    fail(ErrorKind::InvalidGeometry, std::string("no exit arm for ") + std::string(to_string(dir)));
  }
  const int default_lane = dir == Direction::TR ? geom.lanes_per_side : 1;
  ReferenceTrajectory ref;
  ref.direction = dir;
  ref.approach = approach;
  ref.lane_in = lane_in.value_or(default_lane);
  ref.lane_out = lane_out.value_or(dir == Direction::GS ? ref.lane_in : default_lane);
  if (ref.lane_in < 1 || ref.lane_in > geom.lanes_per_side || ref.lane_out < 1 ||
      ref.lane_out > geom.lanes_per_side) {
    fail(ErrorKind::InvalidArgument, "lane index out of range");
  }

  const double h = geom.box_half();
  const double len = geom.arm_length;
  const double oi = geom.lane_offset(ref.lane_in);
  const double oo = geom.lane_offset(ref.lane_out);
  const Eigen::Vector2d start(oi, -h - len);

  // Canonical frame: approach from the south, heading north.
  std::vector<Piece> pieces;
  switch (dir) {
    case Direction::GS: {
      pieces.push_back(line(start, {oi, -h}));
      pieces.push_back(line({oi, -h}, {oo, h}));
      pieces.push_back(line({oo, h}, {oo, h + len}));
      ref.entry_s = len;
      ref.exit_s = len + pieces[1].length;
      break;
    }
    case Direction::TL: {
      const double r = std::min(oi, oo) + h;
      const Eigen::Vector2d c(oi - r, oo - r);
      pieces.push_back(line(start, {oi, c.y()}));
      pieces.push_back(quarter_arc(c, r, 0.0, 1.0));
      pieces.push_back(line({c.x(), oo}, {-h - len, oo}));
      ref.radius = r;
      ref.entry_s = len;
      ref.exit_s = pieces[0].length + pieces[1].length + (c.x() + h);
      break;
    }
    case Direction::TR: {
      const double r = h - std::max(oi, oo);
      if (!(r > 0.0)) fail(ErrorKind::InvalidGeometry, "box too small for a right turn");
      const Eigen::Vector2d c(oi + r, -oo - r);
      pieces.push_back(line(start, {oi, c.y()}));
      pieces.push_back(quarter_arc(c, r, std::numbers::pi, -1.0));
      pieces.push_back(line({c.x(), -oo}, {h + len, -oo}));
      ref.radius = r;
      ref.entry_s = len;
      ref.exit_s = pieces[0].length + pieces[1].length + (h - c.x());
      break;
    }
  }
  ref.points = sample(pieces, ref.spacing);
  const Eigen::Matrix2d rot = arm_rotation(approach);
  for (auto& p : ref.points) p = rot * p;
  return ref;
}

Eigen::Vector2d ReferenceTrajectory::at(double s) const {
  const auto n = points.size();
  const double u = s / spacing;
  if (u <= 0.0) return points[0] + s * tangent(0.0);
  const double end = static_cast<double>(n - 1);
  if (u >= end) return points[n - 1] + (s - length()) * tangent(length());
  const auto i = static_cast<std::size_t>(u);
  const double t = u - static_cast<double>(i);
  return (1.0 - t) * points[i] + t * points[i + 1];
}

Eigen::Vector2d ReferenceTrajectory::tangent(double s) const {
  const auto n = points.size();
  const double u = std::clamp(s / spacing, 0.0, static_cast<double>(n - 1));
  const auto i = std::min(static_cast<std::size_t>(u), n - 2);
  return (points[i + 1] - points[i]).normalized();
}

Eigen::Vector2d ReferenceTrajectory::smooth_tangent(double s) const {
  const auto n = points.size();
  auto vertex = [&](std::size_t i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = std::min(i + 1, n - 1);
    return Eigen::Vector2d((points[b] - points[a]).normalized());
  };
  const double u = std::clamp(s / spacing, 0.0, static_cast<double>(n - 1));
  const auto i = std::min(static_cast<std::size_t>(u), n - 2);
  const double t = u - static_cast<double>(i);
  return ((1.0 - t) * vertex(i) + t * vertex(i + 1)).normalized();
}

double ReferenceTrajectory::project(const Eigen::Vector2d& p) const {
  double best = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const Eigen::Vector2d d = points[i + 1] - points[i];
    const double t = std::clamp((p - points[i]).dot(d) / d.squaredNorm(), 0.0, 1.0);
    const double dist = (points[i] + t * d - p).squaredNorm();
    if (dist < best) {
      best = dist;
      best_s = (static_cast<double>(i) + t) * spacing;
    }
  }
  // Before the first or past the last point, continue along the end tangent.
  const Eigen::Vector2d t0 = tangent(0.0);
  const double before = (p - points.front()).dot(t0);
  if (before < 0.0 && best_s == 0.0) return before;
  const Eigen::Vector2d t1 = tangent(length());
  const double after = (p - points.back()).dot(t1);
  if (after > 0.0 && best_s >= length() - 1e-12) return length() + after;
  return best_s;
}

std::optional<Eigen::Vector2d> first_crossing(const std::vector<Eigen::Vector2d>& a,
                                              const std::vector<Eigen::Vector2d>& b) {
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    const Eigen::Vector2d da = a[i + 1] - a[i];
    const Eigen::Vector2d lo = a[i].cwiseMin(a[i + 1]);
    const Eigen::Vector2d hi = a[i].cwiseMax(a[i + 1]);
    double best_t = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j + 1 < b.size(); ++j) {
      const Eigen::Vector2d blo = b[j].cwiseMin(b[j + 1]);
      const Eigen::Vector2d bhi = b[j].cwiseMax(b[j + 1]);
      if ((blo.array() > hi.array()).any() || (bhi.array() < lo.array()).any()) continue;
      const Eigen::Vector2d db = b[j + 1] - b[j];
      const double den = cross(da, db);
      if (std::abs(den) < 1e-15) continue;
      const Eigen::Vector2d w = b[j] - a[i];
      const double t = cross(w, db) / den;
      const double u = cross(w, da) / den;
      if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) best_t = std::min(best_t, t);
    }
    if (std::isfinite(best_t)) return Eigen::Vector2d(a[i] + best_t * da);
  }
  return std::nullopt;
}

}  // namespace urbanflow
