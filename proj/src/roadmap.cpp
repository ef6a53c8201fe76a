#include "urbanflow/roadmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace urbanflow {
namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

// Left normal in image coordinates (y down): for a rightward direction it points up.
Eigen::Vector2d left_normal(const Eigen::Vector2d& d) { return Eigen::Vector2d(d.y(), -d.x()).normalized(); }

bool segments_intersect(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2, const Eigen::Vector2d& q1,
                        const Eigen::Vector2d& q2) {
  const double d1 = cross(q2 - q1, p1 - q1);
  const double d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1);
  const double d4 = cross(p2 - p1, q2 - p1);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  auto on_segment = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) && std::min(a.y(), b.y()) <= p.y() &&
           p.y() <= std::max(a.y(), b.y());
  };
  if (d1 == 0 && on_segment(q1, q2, p1)) return true;
  if (d2 == 0 && on_segment(q1, q2, p2)) return true;
  if (d3 == 0 && on_segment(p1, p2, q1)) return true;
  if (d4 == 0 && on_segment(p1, p2, q2)) return true;
  return false;
}

bool point_in_polygon(const Polyline& poly, double x, double y) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > y) != (b.y() > y)) {
      const double xi = (b.x() - a.x()) * (y - a.y()) / (b.y() - a.y()) + a.x();
      if (x < xi) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

RoadFrame build_road_frame(const Polyline& centerline_px, double meters_per_pixel, const LaneSpec& lanes,
                           std::vector<double> section_boundaries_m) {
  if (centerline_px.size() < 2) fail(ErrorKind::InvalidGeometry, "centerline needs at least two vertices");
  for (const auto& p : centerline_px) {
    if (!p.allFinite()) fail(ErrorKind::InvalidGeometry, "centerline vertex is not finite");
  }
  for (std::size_t i = 1; i < centerline_px.size(); ++i) {
    if ((centerline_px[i] - centerline_px[i - 1]).norm() == 0.0) {
      fail(ErrorKind::InvalidGeometry, "duplicate consecutive centerline vertices");
    }
  }
  if (!(meters_per_pixel > 0.0)) fail(ErrorKind::InvalidArgument, "meters_per_pixel must be positive");
  if (!(lanes.lane_width_m > 0.0) || lanes.lanes_per_side < 1) {
    fail(ErrorKind::InvalidArgument, "lane width must be positive and lanes_per_side >= 1");
  }
  for (std::size_t i = 1; i < section_boundaries_m.size(); ++i) {
    if (!(section_boundaries_m[i] > section_boundaries_m[i - 1])) {
      fail(ErrorKind::InvalidGeometry, "section boundaries must be strictly increasing");
    }
  }

  RoadFrame rf;
  rf.centerline_ = centerline_px;
  rf.meters_per_pixel_ = meters_per_pixel;
  rf.lanes_ = lanes;
  rf.sections_ = std::move(section_boundaries_m);
  rf.cumulative_px_.assign(centerline_px.size(), 0.0);
  for (std::size_t i = 1; i < centerline_px.size(); ++i) {
    rf.cumulative_px_[i] = rf.cumulative_px_[i - 1] + (centerline_px[i] - centerline_px[i - 1]).norm();
  }
  const std::size_t n = centerline_px.size();
  rf.vertex_normals_.resize(n);
  rf.vertex_normals_[0] = left_normal(centerline_px[1] - centerline_px[0]);
  rf.vertex_normals_[n - 1] = left_normal(centerline_px[n - 1] - centerline_px[n - 2]);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const Eigen::Vector2d a = left_normal(centerline_px[i] - centerline_px[i - 1]);
    const Eigen::Vector2d b = left_normal(centerline_px[i + 1] - centerline_px[i]);
    const Eigen::Vector2d bis = a + b;
    if (bis.norm() < 1e-9) fail(ErrorKind::InvalidGeometry, "centerline reverses on itself");
    rf.vertex_normals_[i] = bis.normalized();
  }
  return rf;
}

Eigen::Vector2d RoadFrame::point_on_segment(std::size_t seg, double t) const {
  return centerline_[seg] + t * (centerline_[seg + 1] - centerline_[seg]);
}

Eigen::Vector2d RoadFrame::normal_on_segment(std::size_t seg, double t) const {
  return ((1.0 - t) * vertex_normals_[seg] + t * vertex_normals_[seg + 1]).normalized();
}

LaneSection assign_lane_section(double x, double y, const RoadFrame& rf) {
  LaneSection out;
  const auto& b = rf.section_boundaries();
  out.section_id = static_cast<int>(std::upper_bound(b.begin(), b.end(), x) - b.begin());
  const double half_width = rf.lanes_per_side() * rf.lane_width();
  const double ay = std::abs(y);
  if (ay > half_width) {
    out.off_road = true;
    out.lane_id = 0;
    return out;
  }
  const int lane = static_cast<int>(std::ceil(ay / rf.lane_width()));
  out.lane_id = y < 0.0 ? -lane : lane;
  return out;
}

RoadPosition image_to_road(const Eigen::Vector2d& p, const RoadFrame& rf) {
  if (!p.allFinite()) fail(ErrorKind::InvalidArgument, "image_to_road: non-finite point");
  const auto& cl = rf.centerline();
  const auto& cum = rf.cumulative_px();
  const std::size_t nseg = rf.segment_count();
  constexpr double kTol = 1e-12;

  struct Candidate {
    double x_px;
    double y_px;
    double radius_px;  // distance along the normal to where the segment's normals meet
    double abs_y;
  };
  std::optional<Candidate> best;

  for (std::size_t s = 0; s < nseg; ++s) {
    const Eigen::Vector2d a = cl[s];
    const Eigen::Vector2d d = cl[s + 1] - a;
    const Eigen::Vector2d na = rf.vertex_normal(s);
    const Eigen::Vector2d dn = rf.vertex_normal(s + 1) - na;
    const Eigen::Vector2d q = p - a;
    // cross(q - t d, na + t dn) = 0, a quadratic in t.
    const double c0 = cross(q, na);
    const double c1 = cross(q, dn) - cross(d, na);
    const double c2 = -cross(d, dn);
    // Candidate parameters; the end segments also extend past the polyline
    // with their end normal held fixed.
    std::vector<double> ts;
    if (std::abs(c2) < 1e-14 * std::max(1.0, std::abs(c1))) {
      if (std::abs(c1) > 0.0) ts.push_back(-c0 / c1);
    } else {
      const double disc = c1 * c1 - 4.0 * c2 * c0;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double qq = -0.5 * (c1 + (c1 >= 0 ? sq : -sq));
        ts.push_back(qq / c2);
        if (qq != 0.0) ts.push_back(c0 / qq);
      }
    }
    std::erase_if(ts, [](double t) { return !(t >= -kTol && t <= 1.0 + kTol); });
    const Eigen::Vector2d nb = rf.vertex_normal(s + 1);
    if (s == 0 && std::abs(cross(d, na)) > 0.0) {
      const double t = cross(q, na) / cross(d, na);
      if (t < 0.0) ts.push_back(t);
    }
    if (s + 1 == nseg && std::abs(cross(d, nb)) > 0.0) {
      const double t = cross(q, nb) / cross(d, nb);
      if (t > 1.0) ts.push_back(t);
    }
    for (double t : ts) {
      const double tn = std::clamp(t, 0.0, 1.0);
      if (t >= -kTol && t <= 1.0 + kTol) t = tn;
      const Eigen::Vector2d foot = a + t * d;
      const Eigen::Vector2d n = rf.normal_on_segment(s, tn);
      const double y = (p - foot).dot(n);
      // Where this segment's end normals meet, the frame folds over itself.
      double radius = std::numeric_limits<double>::infinity();
      const double det = -cross(na, nb);
      if (std::abs(det) > 1e-12 && t >= 0.0 && t <= 1.0) {
        const double alpha = -cross(d, nb) / det;
        const Eigen::Vector2d center = a + alpha * na;
        radius = (center - foot).dot(n);
      }
      const double x_px = cum[s] + t * d.norm();
      Candidate c{x_px, y, radius, std::abs(y)};
      if (!best || c.abs_y < best->abs_y - 1e-12 ||
          (std::abs(c.abs_y - best->abs_y) <= 1e-12 && c.x_px < best->x_px)) {
        best = c;
      }
    }
  }
  if (!best) fail(ErrorKind::AmbiguousProjection, "image_to_road: no foot point on the centerline");
  if (std::isfinite(best->radius_px) && best->y_px * best->radius_px > 0.0 &&
      std::abs(best->y_px) >= std::abs(best->radius_px)) {
    fail(ErrorKind::AmbiguousProjection, "image_to_road: point beyond the local curvature radius");
  }
  RoadPosition rp;
  rp.x = best->x_px * rf.meters_per_pixel();
  rp.y = best->y_px * rf.meters_per_pixel();
  const LaneSection ls = assign_lane_section(rp.x, rp.y, rf);
  rp.section_id = ls.section_id;
  rp.lane_id = ls.lane_id;
  rp.off_road = ls.off_road;
  return rp;
}

Eigen::Vector2d road_to_image(double x, double y, const RoadFrame& rf) {
  const double total = rf.total_length_m();
  if (!(x >= 0.0 && x <= total)) fail(ErrorKind::OutOfRange, "road_to_image: x outside [0, total length]");
  const double x_px = x / rf.meters_per_pixel();
  const auto& cum = rf.cumulative_px();
  auto it = std::upper_bound(cum.begin(), cum.end(), x_px);
  std::size_t seg = it == cum.begin() ? 0 : static_cast<std::size_t>(it - cum.begin()) - 1;
  seg = std::min(seg, rf.segment_count() - 1);
  const double len = cum[seg + 1] - cum[seg];
  const double t = std::clamp((x_px - cum[seg]) / len, 0.0, 1.0);
  return rf.point_on_segment(seg, t) + (y / rf.meters_per_pixel()) * rf.normal_on_segment(seg, t);
}

Eigen::Vector2d road_to_image(const RoadPosition& rp, const RoadFrame& rf) { return road_to_image(rp.x, rp.y, rf); }

bool polygon_is_simple(const Polyline& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a1 = poly[i];
    const auto& a2 = poly[(i + 1) % n];
    if ((a2 - a1).norm() == 0.0) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_intersect(a1, a2, poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

bool inside_polygons(const Eigen::Vector2d& p, std::span<const Polyline> polygons) {
  for (const auto& poly : polygons) {
    if (point_in_polygon(poly, p.x(), p.y())) return true;
  }
  return false;
}

ImageBuffer apply_road_mask(const ImageBuffer& img, std::span<const Polyline> polygons) {
  for (const auto& poly : polygons) {
    if (!polygon_is_simple(poly)) fail(ErrorKind::InvalidGeometry, "road mask polygon is not simple");
  }
  ImageBuffer out = ImageBuffer::Zero(img.rows(), img.cols());
  for (Eigen::Index r = 0; r < img.rows(); ++r) {
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const double x = static_cast<double>(c) + 0.5;
      const double y = static_cast<double>(r) + 0.5;
      for (const auto& poly : polygons) {
        if (point_in_polygon(poly, x, y)) {
          out(r, c) = img(r, c);
          break;
        }
      }
    }
  }
  return out;
}

// ---- file formats ----------------------------------------------------------

RoadFrame read_road_geometry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    Polyline cl;
    for (const auto& v : j.at("centerline_px")) cl.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    LaneSpec lanes{j.at("lane_width_m").get<double>(), j.at("lanes_per_side").get<int>()};
    std::vector<double> sections = j.value("section_boundaries_m", std::vector<double>{});
    RoadFrame rf = build_road_frame(cl, j.at("meters_per_pixel").get<double>(), lanes, std::move(sections));
    if (j.contains("intersection_center_px") && !j["intersection_center_px"].is_null()) {
      const auto& c = j["intersection_center_px"];
      rf.intersection_center_px = Eigen::Vector2d(c.at(0).get<double>(), c.at(1).get<double>());
    }
    if (j.contains("road_polygons_px")) {
      for (const auto& poly : j["road_polygons_px"]) {
        Polyline p;
        for (const auto& v : poly) p.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
        rf.road_polygons_px.push_back(std::move(p));
      }
    }
    return rf;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, "road geometry " + path.string() + ": " + e.what());
  }
}

void write_road_geometry(const std::filesystem::path& path, const RoadFrame& rf,
                         const std::vector<std::string>& header_comments) {
  nlohmann::json j;
  if (!header_comments.empty()) j["provenance"] = header_comments;
  j["centerline_px"] = nlohmann::json::array();
  for (const auto& p : rf.centerline()) j["centerline_px"].push_back({p.x(), p.y()});
  j["meters_per_pixel"] = rf.meters_per_pixel();
  j["lane_width_m"] = rf.lane_width();
  j["lanes_per_side"] = rf.lanes_per_side();
  j["section_boundaries_m"] = rf.section_boundaries();
  if (rf.intersection_center_px) {
    j["intersection_center_px"] = {rf.intersection_center_px->x(), rf.intersection_center_px->y()};
  } else {
    j["intersection_center_px"] = nullptr;
  }
  if (!rf.road_polygons_px.empty()) {
    j["road_polygons_px"] = nlohmann::json::array();
    for (const auto& poly : rf.road_polygons_px) {
      nlohmann::json jp = nlohmann::json::array();
      for (const auto& p : poly) jp.push_back({p.x(), p.y()});
      j["road_polygons_px"].push_back(jp);
    }
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump() << "\n";
}

void write_vehicle_records(const std::filesystem::path& path, std::span<const VehicleRecord> records,
                           const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "track_id,frame,x_m,y_m,section_id,lane_id,length_m,width_m\n" << std::setprecision(12);
  for (const auto& r : records) {
    out << r.track_id << "," << r.frame << "," << r.road_pos.x << "," << r.road_pos.y << "," << r.road_pos.section_id
        << "," << r.road_pos.lane_id << "," << r.length << "," << r.width << "\n";
  }
}

std::vector<VehicleRecord> read_vehicle_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<VehicleRecord> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 8) fail(ErrorKind::Io, "vehicle records: short row");
    VehicleRecord r;
    r.track_id = std::stoi(cells[0]);
    r.frame = std::stoi(cells[1]);
    r.road_pos.x = std::stod(cells[2]);
    r.road_pos.y = std::stod(cells[3]);
    r.road_pos.section_id = std::stoi(cells[4]);
    r.road_pos.lane_id = std::stoi(cells[5]);
    r.length = std::stod(cells[6]);
    r.width = std::stod(cells[7]);
    out.push_back(r);
  }
  return out;
}

}  // namespace urbanflow
