#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "urbanflow/imaging.hpp"
#include "urbanflow/intersection.hpp"
#include "urbanflow/predict.hpp"
#include "urbanflow/roadmap.hpp"

namespace urbanflow {

/// Speed as a function of arc length along the vehicle's path.
struct SpeedProfile {
  double cruise = 8.0;
  double turn = 8.0;          // speed held from decel_end through the box
  double decel_start = 0.0;   // meters before box entry
  double decel_end = 0.0;
  double exit_accel = 0.0;    // after leaving the box
  double exit_cruise = 8.0;
  double noise_amp = 0.0;     // relative speed ripple
  double noise_wavelength = 50.0;
  double noise_phase = 0.0;

  double speed_at(double s, double entry_s, double exit_s) const;
};

/// Smooth lateral deviation from the lane center.
struct LateralProfile {
  std::array<double, 3> amp{};
  std::array<double, 3> wavelength{50.0, 50.0, 50.0};
  std::array<double, 3> phase{};
  double corner_cut = 0.0;  // extra offset peaking mid-box

  double offset(double s, double entry_s, double exit_s) const;
};

struct Vehicle {
  int id = 0;
  Direction direction = Direction::GS;
  ReferenceTrajectory path;
  SpeedProfile speed;
  LateralProfile lateral;
  double start_s = 0.0;
  double start_time = 0.0;
  double length = 4.5;
  double width = 1.8;
  std::vector<double> s_table;  // arc length every kTableDt seconds after start_time

  static constexpr double kTableDt = 0.01;

  void integrate(double max_seconds = 120.0);
  double arc_at(double t) const;
  /// Global time at which the vehicle reaches arc length s.
  double time_at_arc(double s) const;
  bool active(double t) const;
  Eigen::Vector2d position(double t) const;
  Eigen::Vector2d velocity(double t) const;
};

struct InteractionPair {
  int pair_id = 0;
  std::size_t ego = 0;
  std::size_t target = 0;
  Yield yield = Yield::EgoFirst;
  Eigen::Vector2d conflict_point = Eigen::Vector2d::Zero();
  double ego_conflict_time = 0.0;
  double target_conflict_time = 0.0;
  double start_time = 0.0;
  double end_time = 0.0;  // target has left the box by 25 m
};

struct World {
  std::uint64_t seed = 0;
  IntersectionGeometry geom;
  double dt = 0.1;
  std::vector<Vehicle> vehicles;
  std::vector<InteractionPair> pairs;
};

/// Independent interacting pairs, each starting at time 0: target from the
/// north, ego from the south.
World gen_world(std::uint64_t seed, int n_pairs);

struct SceneOptions {
  int n_pairs = 4;
  double duration_s = 10.0;
  double start_lo = -9.0;  // pair start times drawn from [start_lo, start_hi]
  double start_hi = 2.0;
  double min_separation_m = 5.0;
};

/// Pairs on a shared clock with random arm rotations, every two vehicles at
/// least min_separation_m apart during [0, duration_s].
World gen_scene(std::uint64_t seed, const SceneOptions& opts = {});

/// Sampled kinematics of one pair at the world rate.
PairSample pair_sample(const World& world, const InteractionPair& pair);

struct DatasetSplits {
  std::vector<PairSample> train;
  std::vector<PairSample> validation;
  std::vector<PairSample> test;
};

DatasetSplits gen_pairs_dataset(const World& world, const std::array<double, 3>& ratios);

struct JitterModel {
  double max_translation_px = 10.0;
  double max_rotation_deg = 1.0;
  double max_perspective = 1e-4;
  double smoothing = 0.8;  // first-order low-pass coefficient
  bool enabled = true;
};

struct RenderOptions {
  int width = 448;
  int height = 448;
  double meters_per_pixel = 0.3;
  double fps = 30.0;
  int frames = 200;
  double start_time = 0.0;
  double detection_sigma_m = 0.0;
  int supersample = 3;
  int blur_passes = 1;  // 3x3 binomial camera blur applied to each raw frame
  std::uint64_t seed = 1;
};

struct PixelDetection {
  int frame = 0;
  Eigen::Vector2d px = Eigen::Vector2d::Zero();  // raw (jittered) frame pixels
  double length_m = 4.5;
  double width_m = 1.8;
  int truth_id = 0;
  bool off_frame = false;
};

struct TruthState {
  int frame = 0;
  int truth_id = 0;
  Eigen::Vector2d world = Eigen::Vector2d::Zero();
  Eigen::Vector2d road = Eigen::Vector2d::Zero();
};

struct RenderResult {
  std::vector<ImageBuffer> frames;
  std::vector<Homography> truth_h;  // raw frame k -> frame 0
  std::vector<Homography> jitter;   // frame 0 -> raw frame k
  std::vector<PixelDetection> detections;
  std::vector<TruthState> truth;
  RoadFrame road;
};

/// Pixel of a world point in the unjittered canvas.
Eigen::Vector2d world_to_canvas(const Eigen::Vector2d& w, const RenderOptions& opts);
Eigen::Vector2d canvas_to_world(const Eigen::Vector2d& px, const RenderOptions& opts);

/// Road frame along the south-north road of the rendered canvas.
RoadFrame scene_road_frame(const IntersectionGeometry& geom, const RenderOptions& opts);

/// Jitter homographies (frame 0 -> raw frame), first-order low-pass chain.
std::vector<Homography> jitter_sequence(const JitterModel& jitter, int frames, int width, int height,
                                        std::uint64_t seed);

RenderResult render_frames(const World& world, const JitterModel& jitter, const RenderOptions& opts);

/// Static scene intensity at a world point (vehicles drawn at time t).
double scene_intensity(const World& world, const Eigen::Vector2d& w, double t);

// ---- file formats ----------------------------------------------------------

/// JSON-lines {frame, u_px, v_px, length_m, width_m, score, truth_id}; off-frame
/// detections are not written.
void write_pixel_detections(const std::filesystem::path& path, const std::vector<PixelDetection>& dets,
                            const std::vector<std::string>& header_comments = {});
std::vector<PixelDetection> read_pixel_detections(const std::filesystem::path& path);

void write_truth_homographies(const std::filesystem::path& path, const std::vector<Homography>& hs,
                              const std::vector<std::string>& header_comments = {});
std::vector<Homography> read_truth_homographies(const std::filesystem::path& path);

}  // namespace urbanflow
