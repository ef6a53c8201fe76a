#include "urbanflow/predict.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "urbanflow/error.hpp"

namespace urbanflow {
namespace {

constexpr double kPositionScale = 50.0;
constexpr double kVelocityScale = 10.0;
constexpr double kOutputScale = 10.0;  // meters per unit of trajectory-head output
constexpr int kReferenceEvery = 5;

using nn::Mat;
using nn::Vec;

double clip_gradient(Vec<double>& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

template <typename Loss>
TrainResult run_training(Vec<double>& params, std::size_t count, const TrainParams& tp, Loss&& loss_fn) {
  if (count == 0) fail(ErrorKind::InvalidArgument, "training set is empty");
  if (tp.epochs < 0 || tp.batch_size < 1 || !(tp.lr >= 0.0)) fail(ErrorKind::InvalidArgument, "invalid training parameters");
  nn::Adam<double> adam(params.size(), tp.lr);
  std::mt19937_64 rng(tp.seed);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result;
  Vec<double> grad(params.size());
  for (int epoch = 0; epoch < tp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < count; start += static_cast<std::size_t>(tp.batch_size)) {
      const std::size_t end = std::min(count, start + static_cast<std::size_t>(tp.batch_size));
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      grad.setZero();
      const double loss = loss_fn(batch, grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        fail(ErrorKind::Divergence, "training loss became non-finite at epoch " + std::to_string(epoch));
      }
      clip_gradient(grad, tp.grad_clip);
      Vec<double> next = params;
      adam.step(next, grad);
      if (!next.allFinite()) fail(ErrorKind::Divergence, "parameters became non-finite");
      params = std::move(next);
      total += loss * static_cast<double>(end - start);
      seen += end - start;
    }
    result.loss_trace.push_back(total / static_cast<double>(seen));
  }
  return result;
}

}  // namespace

std::string_view to_string(Yield y) { return y == Yield::EgoFirst ? "ego_first" : "target_first"; }

Yield yield_from_string(std::string_view s) {
  if (s == "ego_first") return Yield::EgoFirst;
  if (s == "target_first") return Yield::TargetFirst;
  fail(ErrorKind::InvalidArgument, "unknown yield label '" + std::string(s) + "'");
}

std::string_view to_string(TrajectoryMode m) {
  switch (m) {
    case TrajectoryMode::Plain: return "plain";
    case TrajectoryMode::Intention: return "intention";
    case TrajectoryMode::Conditioned: return "conditioned";
  }
  return "?";
}

TrajectoryMode trajectory_mode_from_string(std::string_view s) {
  if (s == "plain") return TrajectoryMode::Plain;
  if (s == "intention") return TrajectoryMode::Intention;
  if (s == "conditioned") return TrajectoryMode::Conditioned;
  fail(ErrorKind::InvalidArgument, "unknown trajectory mode '" + std::string(s) + "'");
}

int trajectory_input_size(TrajectoryMode m) {
  switch (m) {
    case TrajectoryMode::Plain: return kPairFeatures;
    case TrajectoryMode::Intention: return kPairFeatures + 3;
    case TrajectoryMode::Conditioned: return kPairFeatures + 3 + 2 * (30 / kReferenceEvery);
  }
  return kPairFeatures;
}

Eigen::Matrix<double, kPairFeatures, 1> pair_features(const Eigen::Vector2d& ego_p, const Eigen::Vector2d& ego_v,
                                                       const Eigen::Vector2d& tgt_p, const Eigen::Vector2d& tgt_v) {
  auto heading = [](const Eigen::Vector2d& v) {
    double h = std::atan2(v.y(), v.x());
    if (h <= -std::numbers::pi) h += 2.0 * std::numbers::pi;
    return h;
  };
  Eigen::Matrix<double, kPairFeatures, 1> f;
  f << ego_p.x(), ego_p.y(), ego_v.x(), ego_v.y(), heading(ego_v), ego_p.norm(), tgt_p.x(), tgt_p.y(), tgt_v.x(),
      tgt_v.y(), heading(tgt_v), tgt_p.norm();
  return f;
}

Eigen::Matrix<double, kPairFeatures, 1> normalize_features(const Eigen::Matrix<double, kPairFeatures, 1>& f) {
  Eigen::Matrix<double, kPairFeatures, 1> n;
  for (int car = 0; car < 2; ++car) {
    const int o = 6 * car;
    n(o + 0) = f(o + 0) / kPositionScale;
    n(o + 1) = f(o + 1) / kPositionScale;
    n(o + 2) = f(o + 2) / kVelocityScale;
    n(o + 3) = f(o + 3) / kVelocityScale;
    n(o + 4) = f(o + 4) / std::numbers::pi;
    n(o + 5) = f(o + 5) / kPositionScale;
  }
  return n;
}

// ---- intention network -------------------------------------------------

IntentionModel IntentionModel::create(int hidden, std::uint64_t seed) {
  IntentionModel m;
  m.hidden = hidden;
  m.seed = seed;
  nn::Layout layout;
  m.lstm = nn::add_lstm(layout, kPairFeatures, hidden);
  m.direction_head = nn::add_dense(layout, hidden, 3);
  m.yield_head = nn::add_dense(layout, hidden, 2);
  m.params = Vec<double>::Zero(layout.size());
  std::mt19937_64 rng(seed);
  nn::init_lstm(m.params, m.lstm, rng);
  nn::init_dense(m.params, m.direction_head, rng);
  nn::init_dense(m.params, m.yield_head, rng);
  return m;
}

Direction IntentionOutput::direction_argmax(std::size_t step) const {
  const auto& p = direction.at(step);
  return static_cast<Direction>(std::max_element(p.begin(), p.end()) - p.begin());
}

Yield IntentionOutput::yield_argmax(std::size_t step) const {
  const auto& p = yield.at(step);
  return p[1] > p[0] ? Yield::TargetFirst : Yield::EgoFirst;
}

IntentionOutput intention_forward(const IntentionModel& model, const std::vector<PairStep>& seq) {
  if (seq.empty()) fail(ErrorKind::InvalidArgument, "intention_forward: empty sequence");
  std::vector<Mat<double>> xs;
  xs.reserve(seq.size());
  for (const auto& s : seq) xs.emplace_back(normalize_features(s.features));
  nn::LstmTape<double> tape;
  const auto& hs = nn::lstm_forward(model.params, model.lstm, xs, tape);
  IntentionOutput out;
  for (const auto& h : hs) {
    const Mat<double> pd = nn::softmax<double>(nn::dense_forward(model.params, model.direction_head, h));
    const Mat<double> py = nn::softmax<double>(nn::dense_forward(model.params, model.yield_head, h));
    out.direction.push_back({pd(0, 0), pd(1, 0), pd(2, 0)});
    out.yield.push_back({py(0, 0), py(1, 0)});
  }
  return out;
}

double intention_loss(const IntentionModel& model, const std::vector<const PairSample*>& batch, Vec<double>* grad) {
  if (batch.empty()) fail(ErrorKind::InvalidArgument, "intention_loss: empty batch");
  std::size_t steps = 0;
  for (const auto* s : batch) steps = std::max(steps, s->steps.size());
  const auto b = static_cast<Eigen::Index>(batch.size());
  std::vector<Mat<double>> xs(steps, Mat<double>::Zero(kPairFeatures, b));
  double valid = 0.0;
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto& st = batch[static_cast<std::size_t>(j)]->steps;
    for (std::size_t t = 0; t < st.size(); ++t) xs[t].col(j) = normalize_features(st[t].features);
    valid += static_cast<double>(st.size());
  }
  if (valid == 0.0) fail(ErrorKind::InvalidArgument, "intention_loss: no steps");
  nn::LstmTape<double> tape;
  const auto& hs = nn::lstm_forward(model.params, model.lstm, xs, tape);
  double loss = 0.0;
  std::vector<Mat<double>> dh(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Mat<double> pd = nn::softmax<double>(nn::dense_forward(model.params, model.direction_head, hs[t]));
    Mat<double> py = nn::softmax<double>(nn::dense_forward(model.params, model.yield_head, hs[t]));
    for (Eigen::Index j = 0; j < b; ++j) {
      const PairSample& s = *batch[static_cast<std::size_t>(j)];
      if (t >= s.steps.size()) {
        pd.col(j).setZero();
        py.col(j).setZero();
        continue;
      }
      const auto dl = static_cast<Eigen::Index>(s.direction);
      const auto yl = static_cast<Eigen::Index>(s.yield);
      loss -= std::log(pd(dl, j)) + std::log(py(yl, j));
      pd(dl, j) -= 1.0;
      py(yl, j) -= 1.0;
    }
    if (grad != nullptr) {
      pd /= valid;
      py /= valid;
      dh[t] = nn::dense_backward(model.params, model.direction_head, hs[t], pd, *grad);
      dh[t] += nn::dense_backward(model.params, model.yield_head, hs[t], py, *grad);
    }
  }
  if (grad != nullptr) nn::lstm_backward(model.params, model.lstm, tape, dh, *grad);
  return loss / valid;
}

TrainResult train_intention(IntentionModel& model, const std::vector<PairSample>& data, const TrainParams& tp) {
  return run_training(model.params, data.size(), tp, [&](const std::vector<std::size_t>& idx, Vec<double>& grad) {
    std::vector<const PairSample*> batch;
    for (auto i : idx) batch.push_back(&data[i]);
    return intention_loss(model, batch, &grad);
  });
}

// ---- trajectory network ------------------------------------------------

TrajectoryModel TrajectoryModel::create(TrajectoryMode mode, int window, int horizon, int hidden, std::uint64_t seed) {
  if (window < 1 || horizon < 1) fail(ErrorKind::InvalidArgument, "window and horizon must be positive");
  if (mode == TrajectoryMode::Conditioned && horizon != 30) {
    fail(ErrorKind::InvalidArgument, "conditioned mode samples the reference over a 30-step horizon");
  }
  TrajectoryModel m;
  m.mode = mode;
  m.window = window;
  m.horizon = horizon;
  m.hidden = hidden;
  m.seed = seed;
  nn::Layout layout;
  m.lstm = nn::add_lstm(layout, trajectory_input_size(mode), hidden);
  m.head = nn::add_dense(layout, hidden, 2 * horizon);
  m.params = Vec<double>::Zero(layout.size());
  std::mt19937_64 rng(seed);
  nn::init_lstm(m.params, m.lstm, rng);
  nn::init_dense(m.params, m.head, rng, 0.1);
  return m;
}

ReferenceTrajectory target_reference(const PairSample& sample, std::size_t anchor, Direction dir,
                                     const IntersectionGeometry& geom) {
  if (anchor >= sample.steps.size()) fail(ErrorKind::InvalidArgument, "anchor outside the sample");
  // The lane is read where the target was first observed, on its approach arm.
  const int lane = approach_lane(geom, sample.target_arm, sample.steps.front().target_xy());
  return reference_trajectory(geom, sample.target_arm, dir, lane, lane);
}

std::vector<Eigen::Vector2d> timed_reference(const ReferenceTrajectory& ref, const Eigen::Vector2d& position,
                                             double speed, double dt, int horizon) {
  const double s0 = ref.project(position);
  std::vector<Eigen::Vector2d> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int k = 1; k <= horizon; ++k) out.push_back(ref.at(s0 + speed * dt * k));
  return out;
}

TrajectoryInput make_trajectory_input(TrajectoryMode mode, int window, int horizon, const PairSample& sample,
                                      std::size_t anchor, Direction dir, const IntersectionGeometry& geom) {
  if (anchor >= sample.steps.size() || anchor + 1 < static_cast<std::size_t>(window)) {
    fail(ErrorKind::InvalidArgument, "trajectory input window is incomplete");
  }
  const PairStep& now = sample.steps[anchor];
  const Eigen::Vector2d origin = now.target_xy();
  TrajectoryInput in;
  if (mode == TrajectoryMode::Conditioned) {
    in.base = timed_reference(target_reference(sample, anchor, dir, geom), origin, now.target_velocity().norm(),
                              sample.dt, horizon);
  } else {
    in.base.assign(static_cast<std::size_t>(horizon), origin);
  }
  const int size = trajectory_input_size(mode);
  Eigen::VectorXd context = Eigen::VectorXd::Zero(size - kPairFeatures);
  if (mode != TrajectoryMode::Plain) context(static_cast<Eigen::Index>(dir)) = 1.0;
  if (mode == TrajectoryMode::Conditioned) {
    for (int k = 0; k < horizon / kReferenceEvery; ++k) {
      const Eigen::Vector2d rel =
          (in.base[static_cast<std::size_t>((k + 1) * kReferenceEvery - 1)] - origin) / kOutputScale;
      context.segment<2>(3 + 2 * k) = rel;
    }
  }
  in.window.resize(size, window);
  for (int c = 0; c < window; ++c) {
    const std::size_t t = anchor + 1 - static_cast<std::size_t>(window) + static_cast<std::size_t>(c);
    in.window.col(c).head<kPairFeatures>() = normalize_features(sample.steps[t].features);
    in.window.col(c).tail(size - kPairFeatures) = context;
  }
  return in;
}

namespace {

// Final-step head output for a batch of inputs (2*horizon x B).
Mat<double> trajectory_outputs(const TrajectoryModel& model, const std::vector<const TrajectoryInput*>& inputs,
                               nn::LstmTape<double>& tape) {
  const auto b = static_cast<Eigen::Index>(inputs.size());
  const int size = trajectory_input_size(model.mode);
  std::vector<Mat<double>> xs(static_cast<std::size_t>(model.window), Mat<double>(size, b));
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto& w = inputs[static_cast<std::size_t>(j)]->window;
    if (w.rows() != size || w.cols() != model.window) fail(ErrorKind::InvalidArgument, "trajectory input has wrong shape");
    for (int t = 0; t < model.window; ++t) xs[static_cast<std::size_t>(t)].col(j) = w.col(t);
  }
  const auto& hs = nn::lstm_forward(model.params, model.lstm, xs, tape);
  return nn::dense_forward(model.params, model.head, hs.back());
}

}  // namespace

std::vector<Eigen::Vector2d> trajectory_forward(const TrajectoryModel& model, const TrajectoryInput& input,
                                                int horizon) {
  if (horizon != model.horizon) fail(ErrorKind::InvalidArgument, "horizon differs from the model's configuration");
  if (static_cast<int>(input.base.size()) != horizon) fail(ErrorKind::InvalidArgument, "base length mismatch");
  nn::LstmTape<double> tape;
  const Mat<double> out = trajectory_outputs(model, {&input}, tape);
  std::vector<Eigen::Vector2d> pred;
  pred.reserve(static_cast<std::size_t>(horizon));
  for (int k = 0; k < horizon; ++k) {
    pred.push_back(input.base[static_cast<std::size_t>(k)] + kOutputScale * Eigen::Vector2d(out(2 * k, 0), out(2 * k + 1, 0)));
  }
  return pred;
}

double trajectory_loss(const TrajectoryModel& model, const std::vector<const TrajectorySample*>& batch,
                       Vec<double>* grad) {
  if (batch.empty()) fail(ErrorKind::InvalidArgument, "trajectory_loss: empty batch");
  std::vector<const TrajectoryInput*> inputs;
  for (const auto* s : batch) inputs.push_back(&s->input);
  nn::LstmTape<double> tape;
  const Mat<double> out = trajectory_outputs(model, inputs, tape);
  const auto b = static_cast<Eigen::Index>(batch.size());
  const double norm = static_cast<double>(b) * model.horizon;
  Mat<double> dout(out.rows(), b);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < b; ++j) {
    const TrajectorySample& s = *batch[static_cast<std::size_t>(j)];
    for (int k = 0; k < model.horizon; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const Eigen::Vector2d err =
          s.input.base[kk] + kOutputScale * Eigen::Vector2d(out(2 * k, j), out(2 * k + 1, j)) - s.target[kk];
      loss += err.squaredNorm();
      dout(2 * k, j) = 2.0 * kOutputScale * err.x() / norm;
      dout(2 * k + 1, j) = 2.0 * kOutputScale * err.y() / norm;
    }
  }
  if (grad != nullptr) {
    std::vector<Mat<double>> dh(tape.h.size());
    dh.back() = nn::dense_backward(model.params, model.head, tape.h.back(), dout, *grad);
    nn::lstm_backward(model.params, model.lstm, tape, dh, *grad);
  }
  return loss / norm;
}

std::vector<TrajectorySample> trajectory_samples(const TrajectoryModel& model, const std::vector<PairSample>& data,
                                                 const IntersectionGeometry& geom, int stride, double lo, double hi,
                                                 const IntentionModel* intention) {
  if (stride < 1) fail(ErrorKind::InvalidArgument, "stride must be positive");
  const bool closed_loop = intention != nullptr && model.mode != TrajectoryMode::Plain;
  std::vector<TrajectorySample> out;
  for (const auto& s : data) {
    const std::size_t n = s.steps.size();
    IntentionOutput intent;
    if (closed_loop) intent = intention_forward(*intention, s.steps);
    for (std::size_t t = static_cast<std::size_t>(model.window - 1); t + static_cast<std::size_t>(model.horizon) < n;
         t += static_cast<std::size_t>(stride)) {
      const double d = s.steps[t].target_dist_to_entry;
      if (d < lo || d >= hi) continue;
      TrajectorySample ts;
      const Direction dir = closed_loop ? intent.direction_argmax(t) : s.direction;
      ts.input = make_trajectory_input(model.mode, model.window, model.horizon, s, t, dir, geom);
      ts.target.assign(s.future_target_xy.begin() + static_cast<std::ptrdiff_t>(t + 1),
                       s.future_target_xy.begin() + static_cast<std::ptrdiff_t>(t + 1 + model.horizon));
      ts.target_dist_to_entry = d;
      out.push_back(std::move(ts));
    }
  }
  return out;
}

TrainResult train_trajectory(TrajectoryModel& model, const std::vector<TrajectorySample>& data,
                             const TrainParams& tp) {
  return run_training(model.params, data.size(), tp, [&](const std::vector<std::size_t>& idx, Vec<double>& grad) {
    std::vector<const TrajectorySample*> batch;
    for (auto i : idx) batch.push_back(&data[i]);
    return trajectory_loss(model, batch, &grad);
  });
}

// ---- evaluation --------------------------------------------------------

LstmPredictor::LstmPredictor(const IntentionModel* intention, const TrajectoryModel* trajectory,
                             IntersectionGeometry geom)
    : intention_(intention), trajectory_(trajectory), geom_(geom) {}

IntentionOutput LstmPredictor::intentions(const PairSample& sample) const {
  if (intention_ == nullptr) return {};
  return intention_forward(*intention_, sample.steps);
}

std::vector<Eigen::Vector2d> LstmPredictor::trajectory(const PairSample& sample, std::size_t anchor,
                                                       const IntentionOutput& intent) const {
  if (trajectory_ == nullptr) return {};
  if (trajectory_->mode != TrajectoryMode::Plain && intent.direction.empty()) {
    fail(ErrorKind::InvalidArgument, "this trajectory model needs an intention network");
  }
  const Direction dir = intent.direction.empty() ? Direction::GS : intent.direction_argmax(anchor);
  const TrajectoryInput in =
      make_trajectory_input(trajectory_->mode, trajectory_->window, trajectory_->horizon, sample, anchor, dir, geom_);
  return trajectory_forward(*trajectory_, in, trajectory_->horizon);
}

int LstmPredictor::window() const { return trajectory_ != nullptr ? trajectory_->window : 1; }
int LstmPredictor::horizon() const { return trajectory_ != nullptr ? trajectory_->horizon : 0; }

int DistanceBins::count() const { return static_cast<int>(std::lround((hi - lo) / width)); }

std::optional<int> DistanceBins::index(double dist) const {
  if (!(dist >= lo) || !(dist < hi)) return std::nullopt;
  const int i = static_cast<int>(std::floor((dist - lo) / width));
  if (i < 0 || i >= count()) return std::nullopt;
  return i;
}

Evaluation evaluate(const PairPredictor& predictor, const std::vector<PairSample>& data, const DistanceBins& bins,
                    int trajectory_stride) {
  if (!(bins.width > 0.0) || bins.count() < 1) fail(ErrorKind::InvalidArgument, "invalid distance bins");
  if (trajectory_stride < 1) fail(ErrorKind::InvalidArgument, "stride must be positive");
  const auto nb = static_cast<std::size_t>(bins.count());
  std::vector<int> steps(nb, 0);
  std::vector<int> dir_ok(nb, 0);
  std::vector<int> yld_ok(nb, 0);
  std::vector<int> traj_n(nb, 0);
  std::vector<double> traj_sum(nb, 0.0);
  bool have_intent = false;
  const int window = predictor.window();
  const int horizon = predictor.horizon();
  for (const auto& s : data) {
    const IntentionOutput intent = predictor.intentions(s);
    if (!intent.direction.empty()) {
      have_intent = true;
      if (intent.direction.size() != s.steps.size()) fail(ErrorKind::InvalidArgument, "intention length mismatch");
    }
    for (std::size_t t = 0; t < s.steps.size(); ++t) {
      const auto bin = bins.index(s.steps[t].target_dist_to_entry);
      if (!bin) continue;
      const auto b = static_cast<std::size_t>(*bin);
      if (!intent.direction.empty()) {
        ++steps[b];
        dir_ok[b] += intent.direction_argmax(t) == s.direction ? 1 : 0;
        yld_ok[b] += intent.yield_argmax(t) == s.yield ? 1 : 0;
      }
      if (horizon < 1 || t % static_cast<std::size_t>(trajectory_stride) != 0) continue;
      if (t + 1 < static_cast<std::size_t>(window) || t + static_cast<std::size_t>(horizon) >= s.steps.size()) continue;
      const auto pred = predictor.trajectory(s, t, intent);
      if (pred.empty()) continue;
      double err = 0.0;
      for (int k = 0; k < horizon; ++k) {
        err += (pred[static_cast<std::size_t>(k)] - s.future_target_xy[t + 1 + static_cast<std::size_t>(k)])
                   .squaredNorm();
      }
      traj_sum[b] += err / horizon;
      ++traj_n[b];
    }
  }
  Evaluation ev;
  int all_steps = 0;
  int all_dir = 0;
  int all_yld = 0;
  double all_traj = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    BinMetrics m;
    m.lo = bins.lower(static_cast<int>(b));
    m.hi = m.lo + bins.width;
    m.steps = steps[b];
    if (have_intent && steps[b] > 0) {
      m.direction_accuracy = static_cast<double>(dir_ok[b]) / steps[b];
      m.yield_accuracy = static_cast<double>(yld_ok[b]) / steps[b];
    }
    m.trajectories = traj_n[b];
    if (traj_n[b] > 0) m.trajectory_mse = traj_sum[b] / traj_n[b];
    ev.bins.push_back(m);
    all_steps += steps[b];
    all_dir += dir_ok[b];
    all_yld += yld_ok[b];
    all_traj += traj_sum[b];
    ev.trajectories += traj_n[b];
  }
  if (have_intent && all_steps > 0) {
    ev.direction_accuracy = static_cast<double>(all_dir) / all_steps;
    ev.yield_accuracy = static_cast<double>(all_yld) / all_steps;
  }
  if (ev.trajectories > 0) ev.trajectory_mse = all_traj / ev.trajectories;
  return ev;
}

AblationResult run_ablation(const std::vector<PairSample>& train, const std::vector<PairSample>& test,
                            const AblationConfig& cfg) {
  AblationResult r{IntentionModel::create(cfg.hidden, cfg.intention_train.seed), {}, {}};
  train_intention(r.intention, train, cfg.intention_train);
  const TrajectoryMode modes[3] = {TrajectoryMode::Plain, TrajectoryMode::Intention, TrajectoryMode::Conditioned};
  for (std::size_t i = 0; i < 3; ++i) {
    r.trajectory[i] = TrajectoryModel::create(modes[i], cfg.window, cfg.horizon, cfg.hidden, cfg.trajectory_train.seed);
    const auto samples =
        trajectory_samples(r.trajectory[i], train, cfg.geom, cfg.train_stride, cfg.bins.lo, cfg.bins.hi,
                           cfg.teacher_forcing ? nullptr : &r.intention);
    train_trajectory(r.trajectory[i], samples, cfg.trajectory_train);
    const LstmPredictor predictor(&r.intention, &r.trajectory[i], cfg.geom);
    r.evaluation[i] = evaluate(predictor, test, cfg.bins);
  }
  return r;
}

}  // namespace urbanflow
