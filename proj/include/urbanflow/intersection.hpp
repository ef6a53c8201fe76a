#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string_view>
#include <vector>

namespace urbanflow {

enum class Direction { GS = 0, TL = 1, TR = 2 };
// Arm a vehicle arrives from. A vehicle on the South arm drives north.
enum class Arm { South = 0, East = 1, North = 2, West = 3 };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

/// Four-arm intersection centered at (0,0), x east, y north, right-hand traffic.
struct IntersectionGeometry {
  double lane_width = 3.5;
  int lanes_per_side = 2;
  double arm_length = 80.0;
  double box_margin = 5.0;
  std::array<bool, 4> arms{true, true, true, true};

  // Half-size of the square conflict box.
  double box_half() const { return lanes_per_side * lane_width + box_margin; }
  // Lateral offset of lane `lane` (1 = next to the centerline).
  double lane_offset(int lane) const { return (lane - 0.5) * lane_width; }
  void validate() const;
};

struct ReferenceTrajectory {
  Direction direction = Direction::GS;
  Arm approach = Arm::South;
  int lane_in = 1;
  int lane_out = 1;
  double spacing = 0.5;
  std::vector<Eigen::Vector2d> points;
  double entry_s = 0.0;  // arc length at which the path enters the box
  double exit_s = 0.0;   // arc length at which it leaves
  double radius = 0.0;   // turn radius, 0 for GS

  double length() const { return spacing * static_cast<double>(points.size() - 1); }
  /// Point at arc length s; linear extrapolation past either end.
  Eigen::Vector2d at(double s) const;
  /// Unit tangent at arc length s.
  Eigen::Vector2d tangent(double s) const;
  /// Tangent blended linearly between vertex tangents, continuous in s.
  Eigen::Vector2d smooth_tangent(double s) const;
  /// Arc length of the closest point to p.
  double project(const Eigen::Vector2d& p) const;
};

/// Default lanes: TL from and into the inner lane, TR from and into the outer
/// lane, GS keeps its lane (inner unless `lane` is given).
ReferenceTrajectory reference_trajectory(const IntersectionGeometry& geom, Arm approach, Direction dir,
                                         std::optional<int> lane_in = std::nullopt,
                                         std::optional<int> lane_out = std::nullopt);

/// Arm the path leaves through.
Arm exit_arm(Arm approach, Direction dir);

/// Rotation taking the canonical (South-arm) frame to the given arm's frame.
Eigen::Matrix2d arm_rotation(Arm approach);

/// Lane index (1-based) closest to the lateral offset of p on the given
/// approach arm, clamped to the valid range.
int approach_lane(const IntersectionGeometry& geom, Arm approach, const Eigen::Vector2d& p);

/// First crossing of two polylines (by arc length along `a`).
std::optional<Eigen::Vector2d> first_crossing(const std::vector<Eigen::Vector2d>& a,
                                              const std::vector<Eigen::Vector2d>& b);

}  // namespace urbanflow
