#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "urbanflow/provenance.hpp"
#include "urbanflow/scenegen.hpp"
#include "urbanflow/stabilize.hpp"
#include "urbanflow/tracking.hpp"

namespace urbanflow {

/// Stage names in execution order.
const std::vector<std::string>& stage_names();

// Artifact file names inside the output directory.
namespace artifact {
inline constexpr const char* kFrames = "frames";
inline constexpr const char* kTruthHomographies = "truth_homographies.csv";
inline constexpr const char* kPixelDetections = "detections_px.jsonl";
inline constexpr const char* kGeometry = "geometry.json";
inline constexpr const char* kTruthRoad = "truth_road.csv";
inline constexpr const char* kPairsTrain = "pairs_train.jsonl";
inline constexpr const char* kPairsVal = "pairs_val.jsonl";
inline constexpr const char* kPairsTest = "pairs_test.jsonl";
inline constexpr const char* kHomographies = "homographies.csv";
inline constexpr const char* kDetections = "detections.jsonl";
inline constexpr const char* kDetectionTruth = "detections_truth.csv";
inline constexpr const char* kTracks = "tracks.jsonl";
inline constexpr const char* kTrajectories = "trajectories.csv";
inline constexpr const char* kModels = "models";
inline constexpr const char* kPredictSummary = "predict_summary.csv";
inline constexpr const char* kStabilizeMetrics = "stabilize_metrics.csv";
inline constexpr const char* kTrackingMetrics = "tracking_metrics.csv";
inline constexpr const char* kMetricsSummary = "metrics_summary.csv";
inline constexpr const char* kEffectiveConfig = "run_config.txt";
inline constexpr const char* kManifest = "run_manifest.txt";
inline constexpr const char* kError = "error.json";
}  // namespace artifact

struct RunOptions {
  Config config;
  std::filesystem::path out_dir = "urbanflow_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> frames;
  std::optional<std::filesystem::path> detections;
  std::optional<std::filesystem::path> geometry;
  std::optional<std::filesystem::path> model;
};

struct StageOutcome {
  std::string stage;
  bool ok = true;
  std::string error_kind;
  std::string message;
};

struct RunReport {
  std::vector<StageOutcome> stages;
  bool ok() const;
};

/// Runs the given stages in canonical order. Stage failures are reported, not
/// thrown; the first failure halts the run and writes error.json.
RunReport run_stages(std::vector<std::string> stages, const RunOptions& opts);

/// Stages listed in the "pipeline.stages" key (comma separated).
std::vector<std::string> configured_stages(const Config& cfg);

// Module configurations as read from the flat config.
StabilizerConfig stabilizer_config(const Config& cfg);
TrackerConfig tracker_config(const Config& cfg);
Model tracking_model(const Config& cfg);
JitterModel jitter_config(const Config& cfg);
RenderOptions render_config(const Config& cfg, std::uint64_t seed);
SceneOptions scene_config(const Config& cfg);
AblationConfig ablation_config(const Config& cfg, std::uint64_t seed);

// ---- evaluation against generator truth ----------------------------------

struct TrackScore {
  int track_id = 0;
  int truth_id = 0;        // majority truth of the associated detections
  int points = 0;
  double rms_m = 0.0;
  int identity_switches = 0;
};

/// Scores smoothed trajectories of confirmed tracks against road-frame truth.
/// `detection_truth[i]` is the truth id of detection row i.
std::vector<TrackScore> score_tracks(const std::vector<KalmanTrack>& tracks,
                                     const std::vector<TrajectoryRow>& smoothed,
                                     const std::vector<int>& detection_truth,
                                     const std::vector<TruthState>& truth);

void write_truth_road(const std::filesystem::path& path, const std::vector<TruthState>& truth,
                      const std::vector<std::string>& header_comments = {});
std::vector<TruthState> read_truth_road(const std::filesystem::path& path);

}  // namespace urbanflow
