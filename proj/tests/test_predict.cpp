#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "urbanflow/predict.hpp"
#include "urbanflow/scenegen.hpp"

using namespace urbanflow;

namespace {

const std::vector<PairSample>& samples() {
  static const std::vector<PairSample> s = [] {
    const World w = gen_world(5, 60);
    std::vector<PairSample> out;
    for (const auto& p : w.pairs) out.push_back(pair_sample(w, p));
    return out;
  }();
  return s;
}

// Feeds the labels and the true future back.
class OraclePredictor : public PairPredictor {
 public:
  IntentionOutput intentions(const PairSample& s) const override {
    IntentionOutput o;
    std::array<double, 3> d{};
    d[static_cast<std::size_t>(s.direction)] = 1.0;
    std::array<double, 2> y{};
    y[static_cast<std::size_t>(s.yield)] = 1.0;
    o.direction.assign(s.steps.size(), d);
    o.yield.assign(s.steps.size(), y);
    return o;
  }
  std::vector<Eigen::Vector2d> trajectory(const PairSample& s, std::size_t anchor,
                                          const IntentionOutput&) const override {
    return {s.future_target_xy.begin() + static_cast<std::ptrdiff_t>(anchor + 1),
            s.future_target_xy.begin() + static_cast<std::ptrdiff_t>(anchor + 31)};
  }
  int window() const override { return 20; }
  int horizon() const override { return 30; }
};

class ConstantGs : public PairPredictor {
 public:
  IntentionOutput intentions(const PairSample& s) const override {
    IntentionOutput o;
    o.direction.assign(s.steps.size(), {0.8, 0.1, 0.1});
    o.yield.assign(s.steps.size(), {0.6, 0.4});
    return o;
  }
  std::vector<Eigen::Vector2d> trajectory(const PairSample&, std::size_t, const IntentionOutput&) const override {
    return {};
  }
  int window() const override { return 20; }
  int horizon() const override { return 0; }
};

void zero_head(nn::Vec<double>& p, const nn::DenseShape& d) {
  nn::view(p, d.w).setZero();
  nn::view(p, d.b).setZero();
}

double max_rel_grad_error(auto&& loss, nn::Vec<double> params) {
  nn::Vec<double> grad = nn::Vec<double>::Zero(params.size());
  loss(params, &grad);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    // Fourth-order central difference, h = 1e-3.
    const double keep = params(i);
    auto at = [&](double d) {
      params(i) = keep + d;
      return loss(params, nullptr);
    };
    const double fd = (-at(2e-3) + 8.0 * at(1e-3) - 8.0 * at(-1e-3) + at(-2e-3)) / 12e-3;
    params(i) = keep;
    worst = std::max(worst, std::abs(fd - grad(i)) / std::max({std::abs(fd), std::abs(grad(i)), 1e-6}));
  }
  return worst;
}

struct Circle {
  Eigen::Vector2d c;
  double r = 0.0;
  double residual = 0.0;
};

// Algebraic circle fit over the samples whose two adjacent segments are both
// off-axis, i.e. the samples on the arc.
Circle fit_arc(const ReferenceTrajectory& ref) {
  auto off_axis = [](const Eigen::Vector2d& d) { return std::abs(d.x()) > 1e-9 && std::abs(d.y()) > 1e-9; };
  std::vector<Eigen::Vector2d> arc;
  for (std::size_t i = 1; i + 1 < ref.points.size(); ++i)
    if (off_axis(ref.points[i] - ref.points[i - 1]) && off_axis(ref.points[i + 1] - ref.points[i]))
      arc.push_back(ref.points[i]);
  REQUIRE(arc.size() >= 3);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(arc.size()), 3);
  Eigen::VectorXd b(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const auto& p = arc[static_cast<std::size_t>(i)];
    a.row(i) << p.x(), p.y(), 1.0;
    b(i) = -p.squaredNorm();
  }
  const Eigen::Vector3d d = a.colPivHouseholderQr().solve(b);
  Circle out;
  out.c = Eigen::Vector2d(-d(0) / 2.0, -d(1) / 2.0);
  out.r = std::sqrt(out.c.squaredNorm() - d(2));
  for (const auto& p : arc) out.residual = std::max(out.residual, std::abs((p - out.c).norm() - out.r));
  return out;
}

}  // namespace

TEST_CASE("pair features") {
  const auto f = pair_features({3, -4}, {-1, 0}, {0.5, 2}, {0, -2});
  CHECK(std::abs(f(5) - 5.0) <= 1e-9);
  CHECK(std::abs(f(11) - std::hypot(0.5, 2.0)) <= 1e-9);
  CHECK(f(4) == doctest::Approx(std::numbers::pi));
  CHECK(f(10) == doctest::Approx(-std::numbers::pi / 2));
  for (const auto& s : samples())
    for (const auto& st : s.steps) {
      CHECK(st.features(4) > -std::numbers::pi);
      CHECK(st.features(4) <= std::numbers::pi);
    }
}

TEST_CASE("reference trajectories") {
  const IntersectionGeometry g;
  const auto gs = reference_trajectory(g, Arm::South, Direction::GS);
  for (const auto& p : gs.points) CHECK(std::abs(p.x() - gs.points.front().x()) <= 1e-9);

  const auto tl = reference_trajectory(g, Arm::South, Direction::TL);
  const auto tr = reference_trajectory(g, Arm::South, Direction::TR);
  CHECK(tr.radius < tl.radius);

  // Circle fitted through the samples of each arc; the arc must touch the
  // incoming and outgoing lane centers.
  const double ti = g.lane_offset(1), to = g.lane_offset(2);
  const Circle ctl = fit_arc(tl);
  CHECK(std::abs(ctl.r - tl.radius) <= 1e-6);
  CHECK(ctl.residual <= 1e-6);
  CHECK(std::abs(ctl.c.x() + ctl.r - ti) <= 1e-6);
  CHECK(std::abs(ctl.c.y() + ctl.r - ti) <= 1e-6);
  const Circle ctr = fit_arc(tr);
  CHECK(ctr.residual <= 1e-6);
  CHECK(std::abs(ctr.c.x() - ctr.r - to) <= 1e-6);
  CHECK(std::abs(ctr.c.y() + ctr.r + to) <= 1e-6);

  // Straight lead-in and lead-out lie on the lane centers.
  for (const auto* ref : {&tl, &tr}) {
    const double lane = ref == &tl ? ti : to;
    const double out_y = ref == &tl ? ti : -to;
    for (const auto& p : ref->points) {
      if (p.y() < -g.box_half()) CHECK(std::abs(p.x() - lane) <= 1e-9);
      if (std::abs(p.x()) > g.box_half()) CHECK(std::abs(p.y() - out_y) <= 1e-9);
    }
  }

  // Tangent continuity along the whole path, junctions included.
  double worst = 0.0;
  for (double s = 0.01; s < tl.length(); s += 0.01) {
    const double c = tl.smooth_tangent(s - 1e-4).dot(tl.smooth_tangent(s + 1e-4));
    worst = std::max(worst, std::acos(std::clamp(c, -1.0, 1.0)));
  }
  CHECK(worst <= std::numbers::pi / 180.0);

  IntersectionGeometry t_junction;
  t_junction.arms = {true, true, true, false};
  try {
    reference_trajectory(t_junction, Arm::South, Direction::TL);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidGeometry);
  }
}

TEST_CASE("zero heads") {
  const auto& s = samples().front();
  IntentionModel im = IntentionModel::create(8, 3);
  zero_head(im.params, im.direction_head);
  zero_head(im.params, im.yield_head);
  const IntentionOutput out = intention_forward(im, s.steps);
  REQUIRE(out.direction.size() == s.steps.size());
  for (std::size_t t = 0; t < s.steps.size(); ++t) {
    for (double p : out.direction[t]) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    for (double p : out.yield[t]) CHECK(p == doctest::Approx(0.5).epsilon(1e-15));
  }

  const IntersectionGeometry g;
  TrajectoryModel tm = TrajectoryModel::create(TrajectoryMode::Conditioned, 20, 30, 8, 4);
  zero_head(tm.params, tm.head);
  const std::size_t anchor = 30;
  const TrajectoryInput in = make_trajectory_input(TrajectoryMode::Conditioned, 20, 30, s, anchor, s.direction, g);
  const auto pred = trajectory_forward(tm, in, 30);
  const auto ref = timed_reference(target_reference(s, anchor, s.direction, g), s.steps[anchor].target_xy(),
                                   s.steps[anchor].target_velocity().norm(), s.dt, 30);
  REQUIRE(pred.size() == 30);
  for (std::size_t k = 0; k < 30; ++k) CHECK(pred[k] == ref[k]);
  CHECK(30 * s.dt == doctest::Approx(3.0));

  try {
    trajectory_forward(tm, in, 20);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidArgument);
  }
}

TEST_CASE("closed-loop training samples") {
  const IntersectionGeometry g;
  std::vector<PairSample> turning;
  for (const auto& s : samples())
    if (s.direction != Direction::GS && turning.size() < 2) turning.push_back(s);
  REQUIRE(turning.size() == 2);

  // Uniform direction probabilities: the argmax is the first class, GS.
  IntentionModel im = IntentionModel::create(8, 5);
  zero_head(im.params, im.direction_head);
  const TrajectoryModel tm = TrajectoryModel::create(TrajectoryMode::Conditioned, 20, 30, 4, 6);
  const auto forced = trajectory_samples(tm, turning, g, 10, -20.0, 60.0);
  const auto closed = trajectory_samples(tm, turning, g, 10, -20.0, 60.0, &im);
  REQUIRE(forced.size() == closed.size());
  REQUIRE(!closed.empty());
  std::size_t i = 0;
  for (const auto& s : turning) {
    for (std::size_t t = 19; t + 30 < s.steps.size(); t += 10) {
      const double d = s.steps[t].target_dist_to_entry;
      if (d < -20.0 || d >= 60.0) continue;
      const TrajectoryInput gs = make_trajectory_input(TrajectoryMode::Conditioned, 20, 30, s, t, Direction::GS, g);
      const TrajectoryInput lab = make_trajectory_input(TrajectoryMode::Conditioned, 20, 30, s, t, s.direction, g);
      CHECK((closed[i].input.window.array() == gs.window.array()).all());
      CHECK((forced[i].input.window.array() == lab.window.array()).all());
      ++i;
    }
  }
  CHECK(i == closed.size());

  // The plain model ignores intentions either way.
  const TrajectoryModel plain = TrajectoryModel::create(TrajectoryMode::Plain, 20, 30, 4, 6);
  const auto a = trajectory_samples(plain, turning, g, 10, -20.0, 60.0);
  const auto b = trajectory_samples(plain, turning, g, 10, -20.0, 60.0, &im);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK((a[k].input.window.array() == b[k].input.window.array()).all());
}

TEST_CASE("reference translation consistency") {
  const IntersectionGeometry g;
  ReferenceTrajectory ref = reference_trajectory(g, Arm::North, Direction::TL);
  const Eigen::Vector2d pos = ref.at(20.0) + Eigen::Vector2d(0.3, -0.2);
  const auto base = timed_reference(ref, pos, 7.5, 0.1, 30);
  const Eigen::Vector2d offset(123.25, -48.5);
  for (auto& p : ref.points) p += offset;
  const auto moved = timed_reference(ref, pos + offset, 7.5, 0.1, 30);
  for (std::size_t k = 0; k < 30; ++k) CHECK((moved[k] - base[k] - offset).norm() <= 1e-9);
}

TEST_CASE("gradients of both networks") {
  const IntersectionGeometry g;
  std::vector<PairSample> few(samples().begin(), samples().begin() + 2);
  for (auto& s : few) {
    s.steps.resize(25);
    s.future_target_xy.resize(25);
  }
  IntentionModel im = IntentionModel::create(4, 11);
  std::vector<const PairSample*> batch{&few[0], &few[1]};
  const double ie = max_rel_grad_error(
      [&](const nn::Vec<double>& p, nn::Vec<double>* grad) {
        IntentionModel m = im;
        m.params = p;
        return intention_loss(m, batch, grad);
      },
      im.params);
  CHECK(ie <= 1e-4);

  TrajectoryModel tm = TrajectoryModel::create(TrajectoryMode::Conditioned, 5, 30, 4, 12);
  const auto ts = trajectory_samples(tm, {samples()[0], samples()[1]}, g, 10, -20.0, 60.0);
  REQUIRE(ts.size() >= 2);
  std::vector<const TrajectorySample*> tb{&ts[0], &ts[1]};
  const double te = max_rel_grad_error(
      [&](const nn::Vec<double>& p, nn::Vec<double>* grad) {
        TrajectoryModel m = tm;
        m.params = p;
        return trajectory_loss(m, tb, grad);
      },
      tm.params);
  CHECK(te <= 1e-4);
}

TEST_CASE("training contracts") {
  const IntersectionGeometry g;
  std::vector<PairSample> data(samples().begin(), samples().begin() + 4);

  IntentionModel im = IntentionModel::create(8, 1);
  const auto before = im.params;
  train_intention(im, data, {0.0, 3, 1, 2, 5.0});
  CHECK((im.params.array() == before.array()).all());

  IntentionModel a = IntentionModel::create(8, 1), b = IntentionModel::create(8, 1);
  train_intention(a, data, {1e-3, 2, 7, 2, 5.0});
  train_intention(b, data, {1e-3, 2, 7, 2, 5.0});
  CHECK((a.params.array() == b.params.array()).all());

  TrajectoryModel tm = TrajectoryModel::create(TrajectoryMode::Conditioned, 20, 30, 16, 2);
  auto ts = trajectory_samples(tm, data, g, 5, -20.0, 60.0);
  REQUIRE(ts.size() >= 10);
  std::vector<TrajectorySample> one{ts[0]};
  const double l0 = trajectory_loss(tm, {&one[0]}, nullptr);
  TrajectoryModel stepped = tm;
  train_trajectory(stepped, one, {1e-4, 1, 1, 1, 0.0});
  CHECK(trajectory_loss(stepped, {&one[0]}, nullptr) < l0);

  ts.resize(10);
  TrajectoryModel fit = TrajectoryModel::create(TrajectoryMode::Conditioned, 20, 30, 16, 3);
  const TrainResult r = train_trajectory(fit, ts, {3e-3, 2000, 1, 10, 0.0});
  CHECK(r.loss_trace.size() == 2000);
  std::vector<const TrajectorySample*> all;
  for (const auto& s : ts) all.push_back(&s);
  CHECK(trajectory_loss(fit, all, nullptr) <= 1e-3);

  CHECK_THROWS_AS(train_intention(im, {}, {}), Error);
}

TEST_CASE("evaluation baselines") {
  const DistanceBins bins;
  const Evaluation perfect = evaluate(OraclePredictor{}, samples(), bins);
  for (const auto& b : perfect.bins) {
    if (b.steps == 0) continue;
    CHECK(*b.direction_accuracy == 1.0);
    CHECK(*b.yield_accuracy == 1.0);
    if (b.trajectory_mse) CHECK(*b.trajectory_mse == 0.0);
  }
  REQUIRE(perfect.trajectory_mse.has_value());
  CHECK(*perfect.trajectory_mse == 0.0);

  // Labels are balanced over targets; the step-weighted GS share is counted directly.
  std::array<int, 3> labels{};
  int gs_steps = 0, all_steps = 0;
  for (const auto& s : samples()) {
    ++labels[static_cast<std::size_t>(s.direction)];
    for (const auto& st : s.steps) {
      if (!bins.index(st.target_dist_to_entry)) continue;
      ++all_steps;
      gs_steps += s.direction == Direction::GS;
    }
  }
  for (int c : labels) CHECK(std::abs(c / 60.0 - 1.0 / 3.0) <= 0.1);
  const Evaluation gs = evaluate(ConstantGs{}, samples(), bins);
  CHECK(*gs.direction_accuracy == doctest::Approx(static_cast<double>(gs_steps) / all_steps).epsilon(1e-12));
  CHECK(std::abs(*gs.direction_accuracy - 1.0 / 3.0) <= 0.15);
  CHECK_FALSE(gs.trajectory_mse.has_value());

  DistanceBins far{5.0, 500.0, 520.0};
  const Evaluation empty = evaluate(ConstantGs{}, samples(), far);
  for (const auto& b : empty.bins) {
    CHECK(b.steps == 0);
    CHECK_FALSE(b.direction_accuracy.has_value());
  }
}

TEST_CASE("file round trips") {
  const auto dir = std::filesystem::temp_directory_path() / "urbanflow_test_predict";
  std::filesystem::create_directories(dir);
  const std::vector<PairSample> few(samples().begin(), samples().begin() + 3);
  write_pairs(dir / "p.jsonl", few, {"test"});
  const auto back = read_pairs(dir / "p.jsonl");
  REQUIRE(back.size() == 3);
  CHECK(back[1].direction == few[1].direction);
  CHECK(back[1].yield == few[1].yield);
  REQUIRE(back[1].steps.size() == few[1].steps.size());
  CHECK(back[1].steps[7].features == few[1].steps[7].features);

  const IntentionModel im = IntentionModel::create(8, 9);
  save_model(dir / "i.model", im, {"test"});
  const IntentionModel il = load_intention_model(dir / "i.model");
  CHECK((il.params.array() == im.params.array()).all());

  const TrajectoryModel tm = TrajectoryModel::create(TrajectoryMode::Intention, 20, 30, 8, 9);
  save_model(dir / "t.model", tm, {"test"});
  const TrajectoryModel tl = load_trajectory_model(dir / "t.model");
  CHECK(tl.mode == TrajectoryMode::Intention);
  CHECK((tl.params.array() == tm.params.array()).all());
  std::filesystem::remove_all(dir);
}
