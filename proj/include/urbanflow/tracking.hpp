#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "urbanflow/kalman.hpp"
#include "urbanflow/roadmap.hpp"

namespace urbanflow {

using Model = KalmanModel<double>;
using State = KalmanState<double>;

struct Measurement {
  int frame = 0;
  Eigen::Vector2d z = Eigen::Vector2d::Zero();  // road coordinates, meters
  double length = 4.5;
  double width = 1.8;
  double score = 1.0;
  int source_index = -1;  // row in the detection file, for evaluation
};

enum class TrackStatus { Tentative, Confirmed, Dead };

struct TrackEntry {
  int frame = 0;
  State filtered;
  State predicted;
  std::optional<Measurement> measurement;
};

struct KalmanTrack {
  int track_id = 0;
  TrackStatus status = TrackStatus::Tentative;
  bool was_confirmed = false;
  int hits = 0;
  int misses = 0;
  std::vector<TrackEntry> history;
};

struct TrackerConfig {
  double gate_m = 3.0;
  int confirm_hits = 3;
  int max_misses = 5;
  double init_velocity_var = 100.0;
};

struct Association {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track, detection)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_detections;
};

/// Greedy nearest-neighbour matching in ascending distance, gated at `gate_m`.
Association associate(std::span<const Eigen::Vector2d> predicted_positions, std::span<const Measurement> detections,
                      double gate_m);
/// Uses each track's most recent predicted position.
Association associate(std::span<const KalmanTrack> tracks, std::span<const Measurement> detections, double gate_m);

std::vector<KalmanTrack> run_tracker(std::vector<Measurement> detections, const Model& model,
                                     const TrackerConfig& cfg = {});

std::vector<State> rts_smooth(const KalmanTrack& track, const Model& model);

struct TrajectoryRow {
  VehicleRecord record;
  double vx = 0.0;
  double vy = 0.0;
  double heading_rad = 0.0;
};

/// Smoothed rows for one track; lane/section come from `rf` when given.
std::vector<TrajectoryRow> trajectory_rows(const KalmanTrack& track, const std::vector<State>& states,
                                           const RoadFrame* rf);

// ---- file formats ----------------------------------------------------------

/// JSON-lines {frame, x_m, y_m, length_m, width_m, score}; lines holding a
/// "provenance" key are skipped.
std::vector<Measurement> read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, std::span<const Measurement> dets,
                      const std::vector<std::string>& header_comments = {});

void write_tracks(const std::filesystem::path& path, std::span<const KalmanTrack> tracks,
                  const std::vector<std::string>& header_comments = {});
std::vector<KalmanTrack> read_tracks(const std::filesystem::path& path);

void write_trajectories(const std::filesystem::path& path, std::span<const TrajectoryRow> rows,
                        const std::vector<std::string>& header_comments = {});
std::vector<TrajectoryRow> read_trajectories(const std::filesystem::path& path);

}  // namespace urbanflow
