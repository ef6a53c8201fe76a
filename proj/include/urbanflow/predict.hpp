#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "urbanflow/intersection.hpp"
#include "urbanflow/lstm.hpp"

namespace urbanflow {

enum class Yield { EgoFirst = 0, TargetFirst = 1 };

std::string_view to_string(Yield y);
Yield yield_from_string(std::string_view s);

inline constexpr int kPairFeatures = 12;

/// One time step of an interacting pair; positions relative to the
/// intersection center.
struct PairStep {
  // ego: x, y, vx, vy, heading, dist; then the same for the target.
  Eigen::Matrix<double, kPairFeatures, 1> features = Eigen::Matrix<double, kPairFeatures, 1>::Zero();
  double target_dist_to_entry = 0.0;  // arc length to the box edge, negative inside/after

  Eigen::Vector2d target_xy() const { return features.segment<2>(6); }
  Eigen::Vector2d target_velocity() const { return features.segment<2>(8); }
};

/// Fills a feature vector from raw kinematics (heading and distance derived).
Eigen::Matrix<double, kPairFeatures, 1> pair_features(const Eigen::Vector2d& ego_p, const Eigen::Vector2d& ego_v,
                                                       const Eigen::Vector2d& tgt_p, const Eigen::Vector2d& tgt_v);

/// Network input scaling of a raw feature vector.
Eigen::Matrix<double, kPairFeatures, 1> normalize_features(const Eigen::Matrix<double, kPairFeatures, 1>& f);

struct PairSample {
  int pair_id = 0;
  double dt = 0.1;
  Arm target_arm = Arm::North;
  Arm ego_arm = Arm::South;
  Direction direction = Direction::GS;  // target's direction intention
  Direction ego_direction = Direction::TL;
  Yield yield = Yield::EgoFirst;
  std::vector<PairStep> steps;
  std::vector<Eigen::Vector2d> future_target_xy;  // target position at every step
};

// ---- intention network -------------------------------------------------

struct IntentionModel {
  int hidden = 64;
  std::uint64_t seed = 0;
  nn::LstmShape lstm;
  nn::DenseShape direction_head;
  nn::DenseShape yield_head;
  nn::Vec<double> params;

  static IntentionModel create(int hidden, std::uint64_t seed);
};

struct IntentionOutput {
  std::vector<std::array<double, 3>> direction;
  std::vector<std::array<double, 2>> yield;

  Direction direction_argmax(std::size_t step) const;
  Yield yield_argmax(std::size_t step) const;
};

IntentionOutput intention_forward(const IntentionModel& model, const std::vector<PairStep>& seq);

// ---- trajectory network ------------------------------------------------

enum class TrajectoryMode { Plain, Intention, Conditioned };

std::string_view to_string(TrajectoryMode m);
TrajectoryMode trajectory_mode_from_string(std::string_view s);
int trajectory_input_size(TrajectoryMode m);

struct TrajectoryModel {
  TrajectoryMode mode = TrajectoryMode::Conditioned;
  int window = 20;
  int horizon = 30;
  int hidden = 64;
  std::uint64_t seed = 0;
  nn::LstmShape lstm;
  nn::DenseShape head;
  nn::Vec<double> params;

  static TrajectoryModel create(TrajectoryMode mode, int window, int horizon, int hidden, std::uint64_t seed);
};

struct TrajectoryInput {
  Eigen::MatrixXd window;             // features x steps, normalized
  std::vector<Eigen::Vector2d> base;  // prediction = base + residual
};

/// Builds the model input at step `anchor` (the last observed step). `dir` is
/// the intention used for the one-hot and the reference; ignored in Plain mode.
TrajectoryInput make_trajectory_input(TrajectoryMode mode, int window, int horizon, const PairSample& sample,
                                      std::size_t anchor, Direction dir, const IntersectionGeometry& geom);

/// Reference positions at the next `horizon` steps, advancing along the
/// reference at the target's current speed.
std::vector<Eigen::Vector2d> timed_reference(const ReferenceTrajectory& ref, const Eigen::Vector2d& position,
                                             double speed, double dt, int horizon);

/// Reference for the target under direction `dir`, entering and leaving in the
/// lane the target occupied when first observed.
ReferenceTrajectory target_reference(const PairSample& sample, std::size_t anchor, Direction dir,
                                     const IntersectionGeometry& geom);

std::vector<Eigen::Vector2d> trajectory_forward(const TrajectoryModel& model, const TrajectoryInput& input,
                                                int horizon);

// ---- training ----------------------------------------------------------

struct TrainParams {
  double lr = 1e-3;
  int epochs = 10;
  std::uint64_t seed = 1;
  int batch_size = 32;
  double grad_clip = 5.0;  // global-norm clip, <= 0 disables
};

struct TrainResult {
  std::vector<double> loss_trace;  // mean training loss per epoch
};

/// Mean over valid steps of direction + yield cross-entropy, and its gradient.
double intention_loss(const IntentionModel& model, const std::vector<const PairSample*>& batch,
                      nn::Vec<double>* grad);

TrainResult train_intention(IntentionModel& model, const std::vector<PairSample>& data, const TrainParams& tp);

struct TrajectorySample {
  TrajectoryInput input;
  std::vector<Eigen::Vector2d> target;
  double target_dist_to_entry = 0.0;
};

/// Anchors every `stride` steps whose distance to entry lies in [lo, hi) and
/// which have a full window and horizon. Directions come from the labels
/// (teacher forcing) unless an intention network is given, in which case its
/// per-step argmax is used, as at evaluation time.
std::vector<TrajectorySample> trajectory_samples(const TrajectoryModel& model, const std::vector<PairSample>& data,
                                                 const IntersectionGeometry& geom, int stride, double lo, double hi,
                                                 const IntentionModel* intention = nullptr);

/// Mean squared Euclidean error per predicted point, in square meters.
double trajectory_loss(const TrajectoryModel& model, const std::vector<const TrajectorySample*>& batch,
                       nn::Vec<double>* grad);

TrainResult train_trajectory(TrajectoryModel& model, const std::vector<TrajectorySample>& data,
                             const TrainParams& tp);

// ---- evaluation --------------------------------------------------------

class PairPredictor {
 public:
  virtual ~PairPredictor() = default;
  virtual IntentionOutput intentions(const PairSample& sample) const = 0;
  /// Empty when the predictor has no trajectory head.
  virtual std::vector<Eigen::Vector2d> trajectory(const PairSample& sample, std::size_t anchor,
                                                  const IntentionOutput& intent) const = 0;
  virtual int window() const = 0;
  virtual int horizon() const = 0;
};

/// Intention network (optional for Plain) plus a trajectory network. The
/// reference is chosen from the intention network's per-step argmax.
class LstmPredictor : public PairPredictor {
 public:
  LstmPredictor(const IntentionModel* intention, const TrajectoryModel* trajectory, IntersectionGeometry geom);
  IntentionOutput intentions(const PairSample& sample) const override;
  std::vector<Eigen::Vector2d> trajectory(const PairSample& sample, std::size_t anchor,
                                          const IntentionOutput& intent) const override;
  int window() const override;
  int horizon() const override;

 private:
  const IntentionModel* intention_;
  const TrajectoryModel* trajectory_;
  IntersectionGeometry geom_;
};

struct DistanceBins {
  double width = 5.0;
  double lo = -20.0;  // most negative edge (inside / past the box)
  double hi = 60.0;
  int count() const;
  std::optional<int> index(double dist) const;
  double lower(int i) const { return lo + i * width; }
};

struct BinMetrics {
  double lo = 0.0;
  double hi = 0.0;
  int steps = 0;
  std::optional<double> direction_accuracy;
  std::optional<double> yield_accuracy;
  int trajectories = 0;
  std::optional<double> trajectory_mse;
};

struct Evaluation {
  std::vector<BinMetrics> bins;
  std::optional<double> direction_accuracy;
  std::optional<double> yield_accuracy;
  std::optional<double> trajectory_mse;
  int trajectories = 0;
};

Evaluation evaluate(const PairPredictor& predictor, const std::vector<PairSample>& data, const DistanceBins& bins,
                    int trajectory_stride = 1);

// ---- ablation ----------------------------------------------------------

struct AblationConfig {
  IntersectionGeometry geom;
  int hidden = 64;
  int window = 20;
  int horizon = 30;
  TrainParams intention_train{3e-3, 60, 1, 16, 5.0};
  TrainParams trajectory_train{2e-3, 20, 1, 64, 5.0};
  int train_stride = 4;
  bool teacher_forcing = false;  // train trajectory heads on labels instead of predicted intentions
  DistanceBins bins;
};

struct AblationResult {
  IntentionModel intention;
  std::array<TrajectoryModel, 3> trajectory;  // plain, +intention, +intention+reference
  std::array<Evaluation, 3> evaluation;
};

AblationResult run_ablation(const std::vector<PairSample>& train, const std::vector<PairSample>& test,
                            const AblationConfig& cfg);

// ---- file formats ------------------------------------------------------

void write_pairs(const std::filesystem::path& path, const std::vector<PairSample>& pairs,
                 const std::vector<std::string>& header_comments = {});
std::vector<PairSample> read_pairs(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const IntentionModel& model,
                const std::vector<std::string>& header_comments = {});
void save_model(const std::filesystem::path& path, const TrajectoryModel& model,
                const std::vector<std::string>& header_comments = {});
IntentionModel load_intention_model(const std::filesystem::path& path);
TrajectoryModel load_trajectory_model(const std::filesystem::path& path);

void write_bin_metrics(const std::filesystem::path& path, const Evaluation& eval,
                       const std::vector<std::string>& header_comments = {});
/// One row per model variant: name, direction/yield accuracy, trajectory MSE.
void write_summary(const std::filesystem::path& path, const std::vector<std::string>& names,
                   const std::vector<Evaluation>& evals, const std::vector<std::string>& header_comments = {});

}  // namespace urbanflow
