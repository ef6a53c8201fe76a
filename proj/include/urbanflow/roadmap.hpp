#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urbanflow/imaging.hpp"

namespace urbanflow {

using Polyline = std::vector<Eigen::Vector2d>;

struct LaneSpec {
  double lane_width_m = 3.5;
  int lanes_per_side = 2;
};

/// Lane-aligned coordinate system built on the marking that separates the two
/// travel directions. Longitudinal coordinate is arc length from the first
/// vertex; lateral coordinate is positive on the left of the traversal
/// direction (as seen in the image).
///
/// Normals are defined at vertices (bisectors at interior vertices) and
/// interpolated along each segment, so the frame is continuous across vertices
/// and image_to_road inverts road_to_image exactly wherever it is unambiguous.
class RoadFrame {
 public:
  const Polyline& centerline() const { return centerline_; }
  double meters_per_pixel() const { return meters_per_pixel_; }
  double lane_width() const { return lanes_.lane_width_m; }
  int lanes_per_side() const { return lanes_.lanes_per_side; }
  const std::vector<double>& section_boundaries() const { return sections_; }
  const std::vector<double>& cumulative_px() const { return cumulative_px_; }
  double total_length_m() const { return cumulative_px_.back() * meters_per_pixel_; }
  int section_count() const { return static_cast<int>(sections_.size()) + 1; }

  std::optional<Eigen::Vector2d> intersection_center_px;
  std::vector<Polyline> road_polygons_px;

 private:
  friend RoadFrame build_road_frame(const Polyline&, double, const LaneSpec&, std::vector<double>);

  Polyline centerline_;
  std::vector<double> cumulative_px_;
  std::vector<Eigen::Vector2d> vertex_normals_;
  double meters_per_pixel_ = 1.0;
  LaneSpec lanes_;
  std::vector<double> sections_;

 public:
  // Frame point and unit normal at segment `seg`, parameter t in [0,1].
  Eigen::Vector2d point_on_segment(std::size_t seg, double t) const;
  Eigen::Vector2d normal_on_segment(std::size_t seg, double t) const;
  std::size_t segment_count() const { return centerline_.size() - 1; }
  const Eigen::Vector2d& vertex_normal(std::size_t i) const { return vertex_normals_[i]; }
};

RoadFrame build_road_frame(const Polyline& centerline_px, double meters_per_pixel, const LaneSpec& lanes,
                           std::vector<double> section_boundaries_m);

struct LaneSection {
  int section_id = 0;
  int lane_id = 0;
  bool off_road = false;
};

struct RoadPosition {
  double x = 0.0;  // meters along the centerline
  double y = 0.0;  // meters, positive to the left
  int section_id = 0;
  int lane_id = 0;
  bool off_road = false;
};

LaneSection assign_lane_section(double x, double y, const RoadFrame& rf);

RoadPosition image_to_road(const Eigen::Vector2d& p_px, const RoadFrame& rf);
Eigen::Vector2d road_to_image(const RoadPosition& rp, const RoadFrame& rf);
Eigen::Vector2d road_to_image(double x, double y, const RoadFrame& rf);

/// Zeroes every pixel whose center lies outside all polygons (even-odd rule).
ImageBuffer apply_road_mask(const ImageBuffer& img, std::span<const Polyline> polygons);
bool polygon_is_simple(const Polyline& polygon);
/// Even-odd inside test against any of the polygons.
bool inside_polygons(const Eigen::Vector2d& p, std::span<const Polyline> polygons);

struct VehicleRecord {
  int track_id = 0;
  int frame = 0;
  RoadPosition road_pos;
  double length = 4.5;
  double width = 1.8;
};

// ---- file formats ----------------------------------------------------------

/// JSON road geometry: centerline_px, meters_per_pixel, lane_width_m,
/// lanes_per_side, section_boundaries_m, intersection_center_px and the
/// optional road_polygons_px.
RoadFrame read_road_geometry(const std::filesystem::path& path);
void write_road_geometry(const std::filesystem::path& path, const RoadFrame& rf,
                         const std::vector<std::string>& header_comments = {});

void write_vehicle_records(const std::filesystem::path& path, std::span<const VehicleRecord> records,
                           const std::vector<std::string>& header_comments = {});
std::vector<VehicleRecord> read_vehicle_records(const std::filesystem::path& path);

}  // namespace urbanflow
