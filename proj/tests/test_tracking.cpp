#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "urbanflow/scenegen.hpp"
#include "urbanflow/tracking.hpp"

using namespace urbanflow;

namespace {

struct Sim {
  std::vector<Eigen::Vector2d> truth;
  std::vector<Eigen::Vector2d> meas;
};

Sim constant_velocity_run(int steps, double dt, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  Sim s;
  for (int k = 0; k < steps; ++k) {
    const Eigen::Vector2d p(2.0 + 8.0 * k * dt, -1.0 + 1.5 * k * dt);
    s.truth.push_back(p);
    s.meas.push_back(p + Eigen::Vector2d(n(rng), n(rng)));
  }
  return s;
}

struct FilterRun {
  std::vector<State> filtered, predicted;
  double mean_nis = 0.0;
};

FilterRun filter(const Model& m, const std::vector<Eigen::Vector2d>& z, const State& init) {
  FilterRun out;
  State s = init;
  double nis = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const State pred = k == 0 ? init : kf_predict(s, m);
    Innovation in;
    s = kf_update(pred, m, Eigen::VectorXd(z[k]), &in);
    nis += in.nis;
    out.predicted.push_back(pred);
    out.filtered.push_back(s);
  }
  out.mean_nis = nis / static_cast<double>(z.size());
  return out;
}

double rms_jerk(const std::vector<Eigen::Vector2d>& p, double dt) {
  double s = 0.0;
  int n = 0;
  for (std::size_t k = 3; k < p.size(); ++k) {
    const Eigen::Vector2d j = (p[k] - 3.0 * p[k - 1] + 3.0 * p[k - 2] - p[k - 3]) / (dt * dt * dt);
    s += j.squaredNorm();
    ++n;
  }
  return std::sqrt(s / n);
}

}  // namespace

TEST_CASE("scalar Kalman update") {
  KalmanModel<double> m;
  m.F = Eigen::MatrixXd::Constant(1, 1, 1.0);
  m.H = Eigen::MatrixXd::Constant(1, 1, 1.0);
  m.Q = Eigen::MatrixXd::Zero(1, 1);
  m.R = Eigen::MatrixXd::Constant(1, 1, 1.0);
  const State prior{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0)};
  const State post = kf_update(prior, m, Eigen::VectorXd(Eigen::VectorXd::Constant(1, 2.0)));
  CHECK(post.x(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(post.P(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("noiseless constant velocity") {
  Model m = Model::constant_velocity(0.1, 0.0, 0.2);
  const Sim s = constant_velocity_run(100, 0.1, 0.0, 1);
  State init{Eigen::Vector4d(2.0, -1.0, 8.0, 1.5), Eigen::Matrix4d::Identity() * 1e-2};
  const FilterRun f = filter(m, s.meas, init);
  double worst = 0.0;
  for (std::size_t k = 0; k < s.truth.size(); ++k) worst = std::max(worst, (f.filtered[k].x.head<2>() - s.truth[k]).norm());
  CHECK(worst <= 1e-9);

  const auto smoothed = rts_backward(f.filtered, f.predicted, m);
  double ws = 0.0;
  for (std::size_t k = 0; k < s.truth.size(); ++k) {
    ws = std::max(ws, (smoothed[k].x.head<2>() - s.truth[k]).norm());
    ws = std::max(ws, (smoothed[k].x - f.filtered[k].x).norm());
  }
  CHECK(ws <= 1e-9);
}

TEST_CASE("steady-state covariance matches Riccati iteration") {
  const Model m = Model::constant_velocity(1.0 / 30.0, 4.0, 0.15);
  State s{Eigen::Vector4d::Zero(), Eigen::Matrix4d::Identity() * 10.0};
  const Eigen::VectorXd z = Eigen::Vector2d::Zero();
  for (int k = 0; k < 1000; ++k) s = kf_step(s, m, std::optional<Eigen::VectorXd>(z));

  // Prior-covariance recursion P <- F (P - P H' (H P H' + R)^-1 H P) F' + Q,
  // then the posterior from the standard (non-Joseph) form.
  const Eigen::Matrix4d f = m.F, q = m.Q;
  const Eigen::Matrix<double, 2, 4> h = m.H;
  const Eigen::Matrix2d r = m.R;
  Eigen::Matrix4d p = f * (Eigen::Matrix4d::Identity() * 10.0) * f.transpose() + q;
  Eigen::Matrix4d post;
  for (int k = 0; k < 1000; ++k) {
    const Eigen::Matrix<double, 4, 2> gain = p * h.transpose() * (h * p * h.transpose() + r).inverse();
    post = (Eigen::Matrix4d::Identity() - gain * h) * p;
    p = f * post * f.transpose() + q;
  }
  CHECK((s.P - post).cwiseAbs().maxCoeff() <= 1e-9);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.P);
  CHECK(es.eigenvalues().minCoeff() >= -1e-9);
}

TEST_CASE("innovation whiteness") {
  const double dt = 0.1, q = 0.5, sigma = 0.3;
  const Model m = Model::constant_velocity(dt, q, sigma);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d x(0, 0, 5, 1);
  std::vector<Eigen::Vector2d> z;
  for (int k = 0; k < 1000; ++k) {
    if (k > 0) {
      const Eigen::Vector2d a(std::sqrt(q) * n(rng), std::sqrt(q) * n(rng));
      x = m.F * x;
      x.head<2>() += 0.5 * dt * dt * a;
      x.tail<2>() += dt * a;
    }
    z.emplace_back(x.head<2>() + sigma * Eigen::Vector2d(n(rng), n(rng)));
  }
  State init{Eigen::Vector4d(z[0].x(), z[0].y(), 0, 0), Eigen::Vector4d(sigma * sigma, sigma * sigma, 100, 100).asDiagonal()};
  const FilterRun f = filter(m, z, init);
  CHECK(f.mean_nis >= 1.6);
  CHECK(f.mean_nis <= 2.4);
}

TEST_CASE("smoothing beats filtering") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double dt = 0.1;
    const Model m = Model::constant_velocity(dt, 0.5, 0.3);
    const Sim s = constant_velocity_run(200, dt, 0.3, seed);
    State init{Eigen::Vector4d(s.meas[0].x(), s.meas[0].y(), 0, 0), Eigen::Vector4d(0.09, 0.09, 100, 100).asDiagonal()};
    const FilterRun f = filter(m, s.meas, init);
    const auto sm = rts_backward(f.filtered, f.predicted, m);
    double mse_f = 0, mse_s = 0;
    std::vector<Eigen::Vector2d> pos;
    for (std::size_t k = 0; k < s.truth.size(); ++k) {
      mse_f += (f.filtered[k].x.head<2>() - s.truth[k]).squaredNorm();
      mse_s += (sm[k].x.head<2>() - s.truth[k]).squaredNorm();
      pos.emplace_back(sm[k].x.head<2>());
    }
    CHECK(mse_s <= mse_f);
    CHECK(rms_jerk(pos, dt) <= 0.5 * rms_jerk(s.meas, dt));
  }
  const std::vector<State> one(1);
  CHECK_THROWS_AS(rts_backward(one, one, Model::constant_velocity(0.1, 1, 1)), Error);
}

TEST_CASE("association") {
  std::vector<Eigen::Vector2d> tracks{{10, 0}};
  std::vector<Measurement> dets(1);
  dets[0].z = {10.2, 0};
  Association a = associate(tracks, dets, 2.0);
  REQUIRE(a.matches.size() == 1);

  dets[0].z = {15, 0};
  a = associate(tracks, dets, 2.0);
  CHECK(a.matches.empty());
  CHECK(a.unmatched_tracks.size() == 1);
  CHECK(a.unmatched_detections.size() == 1);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Eigen::Vector2d> tp(5);
    std::vector<Measurement> dp(5);
    for (auto& p : tp) p = {u(rng), u(rng)};
    for (auto& d : dp) d.z = {u(rng), u(rng)};
    const double gate = 2.0;
    // Replay every (track, detection) pair in ascending distance.
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) pairs.emplace_back((tp[i] - dp[j].z).norm(), i, j);
    std::sort(pairs.begin(), pairs.end());
    std::vector<bool> ut(5, false), ud(5, false);
    std::set<std::pair<std::size_t, std::size_t>> expect;
    for (const auto& [d, i, j] : pairs) {
      if (d > gate || ut[i] || ud[j]) continue;
      ut[i] = ud[j] = true;
      expect.emplace(i, j);
    }
    const Association got = associate(tp, dp, gate);
    const std::set<std::pair<std::size_t, std::size_t>> have(got.matches.begin(), got.matches.end());
    CHECK(have == expect);
  }
}

TEST_CASE("track lifecycle") {
  const Model m = Model::constant_velocity(0.1, 1.0, 0.1);
  TrackerConfig cfg;
  std::vector<Measurement> dets;
  for (int k = 0; k < 50; ++k) {
    Measurement d;
    d.frame = k;
    d.z = {1.0 * k * 0.1 * 5, 2.0};
    dets.push_back(d);
  }
  auto tracks = run_tracker(dets, m, cfg);
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].was_confirmed);
  CHECK(tracks[0].history.size() == 50);
  for (std::size_t k = 1; k < tracks[0].history.size(); ++k)
    CHECK(tracks[0].history[k].frame > tracks[0].history[k - 1].frame);

  std::vector<Measurement> gap;
  for (const auto& d : dets)
    if (d.frame < 20 || d.frame >= 20 + cfg.max_misses + 1) gap.push_back(d);
  tracks = run_tracker(gap, m, cfg);
  REQUIRE(tracks.size() == 2);
  CHECK(tracks[0].status == TrackStatus::Dead);
  CHECK(tracks[0].history.back().frame == 19);
  CHECK(tracks[1].history.front().frame == 20 + cfg.max_misses + 1);
}

TEST_CASE("tracking a generated scene") {
  SceneOptions so;
  so.n_pairs = 4;
  const World w = gen_scene(7, so);
  const double dt = 1.0 / 30.0;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 0.2);
  std::vector<Measurement> dets;
  std::vector<int> truth_of;
  for (int f = 0; f < 300; ++f) {
    const double t = f * dt;
    for (const auto& v : w.vehicles) {
      if (!v.active(t)) continue;
      Measurement d;
      d.frame = f;
      d.z = v.position(t) + Eigen::Vector2d(n(rng), n(rng));
      d.source_index = static_cast<int>(truth_of.size());
      truth_of.push_back(v.id);
      dets.push_back(d);
    }
  }
  const auto tracks = run_tracker(dets, Model::constant_velocity(dt, 4.0, 0.2), {});
  int confirmed = 0, correct = 0, associated = 0, switches = 0;
  for (const auto& t : tracks) {
    if (!t.was_confirmed) continue;
    ++confirmed;
    std::map<int, int> votes;
    for (const auto& e : t.history)
      if (e.measurement) ++votes[truth_of[static_cast<std::size_t>(e.measurement->source_index)]];
    int major = 0, best = 0;
    for (auto [id, c] : votes)
      if (c > best) std::tie(major, best) = std::tie(id, c);
    int prev = 0;
    for (const auto& e : t.history) {
      if (!e.measurement) continue;
      const int id = truth_of[static_cast<std::size_t>(e.measurement->source_index)];
      ++associated;
      correct += id == major;
      if (prev != 0 && id != prev) ++switches;
      prev = id;
    }
  }
  CHECK(confirmed == 8);
  CHECK(switches == 0);
  CHECK(correct >= 0.95 * static_cast<double>(dets.size()));
  CHECK(associated <= static_cast<int>(dets.size()));
}

TEST_CASE("track files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "urbanflow_test_tracking";
  std::filesystem::create_directories(dir);
  std::vector<Measurement> dets(2);
  dets[0].frame = 1;
  dets[0].z = {3.25, -1.5};
  dets[1].frame = 2;
  dets[1].z = {3.5, -1.5};
  write_detections(dir / "d.jsonl", dets, {"test"});
  const auto back = read_detections(dir / "d.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].z == dets[0].z);

  const Model m = Model::constant_velocity(0.1, 1.0, 0.1);
  std::vector<Measurement> run;
  for (int k = 0; k < 10; ++k) {
    Measurement d;
    d.frame = k;
    d.z = {0.5 * k, 0.0};
    run.push_back(d);
  }
  const auto tracks = run_tracker(run, m, {});
  write_tracks(dir / "t.jsonl", tracks, {"test"});
  const auto tb = read_tracks(dir / "t.jsonl");
  REQUIRE(tb.size() == tracks.size());
  CHECK(tb[0].history.size() == tracks[0].history.size());
  CHECK(tb[0].history.back().filtered.x.isApprox(tracks[0].history.back().filtered.x, 1e-12));
  const auto sm = rts_smooth(tb[0], m);
  const auto rows = trajectory_rows(tb[0], sm, nullptr);
  write_trajectories(dir / "tr.csv", rows, {"test"});
  CHECK(read_trajectories(dir / "tr.csv").size() == rows.size());
  std::filesystem::remove_all(dir);
}
