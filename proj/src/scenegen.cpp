#include "urbanflow/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "json.hpp"
#include "urbanflow/error.hpp"

namespace urbanflow {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kTargetLeadIn = 70.0;   // target starts this far before the box
constexpr double kPairTail = 25.0;       // pair ends this far past the box exit
constexpr double kMinEgoLeadIn = 5.0;
constexpr double kMaxTurnLateralAccel = 3.3;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vehicle make_vehicle(std::mt19937_64& rng, const IntersectionGeometry& geom, Arm arm, Direction dir) {
  Vehicle v;
  v.direction = dir;
  const int lane = std::uniform_int_distribution<int>(1, geom.lanes_per_side)(rng);
  v.path = reference_trajectory(geom, arm, dir, lane, lane);
  SpeedProfile& sp = v.speed;
  if (dir == Direction::GS) {
    sp.cruise = uniform(rng, 4.2, 7.0);
    sp.turn = sp.cruise;
    sp.exit_cruise = sp.cruise;
  } else {
    sp.cruise = uniform(rng, 9.0, 12.5);
    sp.turn = dir == Direction::TL ? uniform(rng, 5.5, 7.0) : uniform(rng, 4.2, 5.0);
    sp.decel_start = uniform(rng, 50.0, 62.0);
    sp.decel_end = sp.decel_start - uniform(rng, 20.0, 28.0);
    sp.exit_accel = uniform(rng, 1.0, 2.5);
    sp.exit_cruise = uniform(rng, 9.0, 12.5);
  }
  sp.noise_amp = 0.015;
  sp.noise_wavelength = uniform(rng, 40.0, 80.0);
  sp.noise_phase = uniform(rng, 0.0, kTwoPi);
  for (std::size_t i = 0; i < 3; ++i) {
    v.lateral.amp[i] = 0.1225;  // three equal sinusoids, 0.15 m RMS
    v.lateral.wavelength[i] = uniform(rng, 30.0, 80.0);
    v.lateral.phase[i] = uniform(rng, 0.0, kTwoPi);
  }
  v.lateral.corner_cut = dir == Direction::TL ? uniform(rng, -0.3, 0.3) : 0.0;
  if (dir != Direction::GS) {
    // Upper bound on path curvature in the box: arc, ripples and the corner cut.
    double kappa = 1.0 / v.path.radius;
    for (std::size_t i = 0; i < 3; ++i) kappa += v.lateral.amp[i] * std::pow(kTwoPi / v.lateral.wavelength[i], 2);
    const double box = v.path.exit_s - v.path.entry_s;
    kappa += std::abs(v.lateral.corner_cut) * 2.0 * std::pow(std::numbers::pi / box, 2);
    sp.turn = std::min(sp.turn, std::sqrt(kMaxTurnLateralAccel / kappa));
  }
  v.length = uniform(rng, 4.2, 4.9);
  v.width = uniform(rng, 1.7, 1.95);
  return v;
}

Direction ego_direction_for(Direction target, std::mt19937_64& rng) {
  if (target == Direction::TL) return std::bernoulli_distribution(0.5)(rng) ? Direction::GS : Direction::TR;
  return Direction::TL;
}

struct PairDraft {
  Vehicle ego;
  Vehicle target;
  InteractionPair pair;
};

std::optional<PairDraft> try_pair(std::mt19937_64& rng, const IntersectionGeometry& geom, Direction target_dir,
                                  Yield want) {
  PairDraft d;
  d.target = make_vehicle(rng, geom, Arm::North, target_dir);
  d.ego = make_vehicle(rng, geom, Arm::South, ego_direction_for(target_dir, rng));
  d.target.start_s = d.target.path.entry_s - kTargetLeadIn;
  d.target.integrate();
  d.ego.start_s = 0.0;
  d.ego.integrate();

  const auto crossing = first_crossing(d.target.path.points, d.ego.path.points);
  // Paths that only merge into the same exit arm conflict where the target
  // leaves the box.
  const Eigen::Vector2d cp = crossing ? *crossing : d.target.path.at(d.target.path.exit_s);
  const double sc_target = d.target.path.project(cp);
  const double sc_ego = d.ego.path.project(cp);
  const double t_target = d.target.time_at_arc(sc_target);
  const double gap = uniform(rng, 1.5, 4.0);
  const double t_ego = want == Yield::TargetFirst ? t_target + gap : t_target - gap;

  const double t_start = d.ego.time_at_arc(sc_ego) - t_ego;
  if (t_start < 0.0) return std::nullopt;
  const double s_start = d.ego.arc_at(t_start);
  if (s_start > d.ego.path.entry_s - kMinEgoLeadIn || s_start > sc_ego) return std::nullopt;
  d.ego.start_s = s_start;
  d.ego.integrate();

  d.pair.yield = want;
  d.pair.conflict_point = cp;
  d.pair.target_conflict_time = t_target;
  d.pair.ego_conflict_time = d.ego.time_at_arc(sc_ego);
  const double diff = d.pair.ego_conflict_time - d.pair.target_conflict_time;
  if (std::abs(diff) < 1.5 || (want == Yield::TargetFirst) != (diff > 0.0)) return std::nullopt;
  d.pair.start_time = 0.0;
  d.pair.end_time = d.target.time_at_arc(d.target.path.exit_s + kPairTail);
  return d;
}

PairDraft draft_pair(std::mt19937_64& rng, const IntersectionGeometry& geom, Direction target_dir, Yield want) {
  for (int attempt = 0; attempt < 400; ++attempt) {
    // After many infeasible draws fall back to the other yield order.
    const Yield y = attempt < 200 ? want : (want == Yield::EgoFirst ? Yield::TargetFirst : Yield::EgoFirst);
    if (auto d = try_pair(rng, geom, target_dir, y)) return *d;
  }
  fail(ErrorKind::EstimationFailed, "could not place an interacting pair");
}

void shift_time(PairDraft& d, double dt) {
  d.ego.start_time += dt;
  d.target.start_time += dt;
  d.pair.start_time += dt;
  d.pair.end_time += dt;
  d.pair.ego_conflict_time += dt;
  d.pair.target_conflict_time += dt;
}

void rotate_pair(PairDraft& d, const IntersectionGeometry& geom, int quarter_turns) {
  if (quarter_turns == 0) return;
  auto rotate = [&](Vehicle& v) {
    const Arm arm = static_cast<Arm>((static_cast<int>(v.path.approach) + quarter_turns) % 4);
    v.path = reference_trajectory(geom, arm, v.direction, v.path.lane_in, v.path.lane_out);
  };
  rotate(d.ego);
  rotate(d.target);
  d.pair.conflict_point = arm_rotation(static_cast<Arm>(quarter_turns)) * d.pair.conflict_point;
}

struct Pose {
  Eigen::Vector2d center;
  double c = 1.0;
  double s = 0.0;
  double half_len = 2.25;
  double half_wid = 0.9;
  double radius = 3.0;
};

std::vector<Pose> poses_at(const World& world, double t) {
  std::vector<Pose> poses;
  for (const auto& v : world.vehicles) {
    if (!v.active(t)) continue;
    Pose p;
    p.center = v.position(t);
    Eigen::Vector2d vel = v.velocity(t);
    if (vel.norm() < 1e-6) vel = v.path.tangent(v.arc_at(t));
    const double h = std::atan2(vel.y(), vel.x());
    p.c = std::cos(h);
    p.s = std::sin(h);
    p.half_len = 0.5 * v.length;
    p.half_wid = 0.5 * v.width;
    p.radius = std::hypot(p.half_len, p.half_wid);
    poses.push_back(p);
  }
  return poses;
}

constexpr double kBackground = 0.1;
constexpr double kRoad = 0.35;
constexpr double kMarking = 0.9;
constexpr double kVehicle = 0.7;

// Roof-top blocks on a 16 m grid beside the roads, so that the background
// carries structure in every image quadrant.
double block_intensity(double x, double y, double road_half, double box_half) {
  constexpr double kCell = 16.0;
  const double ax = std::abs(x);
  const double ay = std::abs(y);
  if (ax < road_half + 2.0 || ay < road_half + 2.0 || std::max(ax, ay) < box_half + 2.0) return kBackground;
  const double fx = std::floor(x / kCell);
  const double fy = std::floor(y / kCell);
  std::uint64_t k = static_cast<std::uint64_t>(static_cast<std::int64_t>(fx) * 73856093LL) ^
                    static_cast<std::uint64_t>(static_cast<std::int64_t>(fy) * 19349663LL);
  k = (k ^ (k >> 33)) * 0xff51afd7ed558ccdULL;
  k = (k ^ (k >> 33)) * 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  auto unit = [&](int shift) { return static_cast<double>((k >> shift) & 0xff) / 255.0; };
  if (unit(0) < 0.2) return kBackground;
  const double x0 = fx * kCell + 1.0 + 4.0 * unit(8);
  const double x1 = (fx + 1.0) * kCell - 1.0 - 4.0 * unit(16);
  const double y0 = fy * kCell + 1.0 + 4.0 * unit(24);
  const double y1 = (fy + 1.0) * kCell - 1.0 - 4.0 * unit(32);
  if (x < x0 || x > x1 || y < y0 || y > y1) return kBackground;
  return 0.2 + 0.45 * unit(40);
}

double static_intensity(const IntersectionGeometry& geom, double x, double y) {
  const double h = geom.box_half();
  const double a = geom.lanes_per_side * geom.lane_width;
  const double e = h + geom.arm_length;
  if (std::abs(x) <= h && std::abs(y) <= h) return kRoad;
  // Canonical arm coordinates: approach from the south, cy < -h.
  double cx = 0.0;
  double cy = 0.0;
  if (std::abs(y) >= std::abs(x)) {
    if (y < 0.0) {
      cx = x;
      cy = y;
    } else {
      cx = -x;
      cy = -y;
    }
  } else if (x > 0.0) {
    cx = y;
    cy = -x;
  } else {
    cx = -y;
    cy = x;
  }
  if (std::abs(cx) > a || cy < -e) return block_intensity(x, y, a, h);
  const double ax = std::abs(cx);
  if (ax <= 0.2) return kMarking;
  if (ax >= a - 0.3) return kMarking;
  if (cx >= 0.0 && cy >= -h - 0.6) return kMarking;  // stop line
  for (int lane = 1; lane < geom.lanes_per_side; ++lane) {
    if (std::abs(ax - lane * geom.lane_width) <= 0.15 && std::fmod(-h - cy, 9.0) < 3.0) return kMarking;
  }
  return kRoad;
}

double intensity(const IntersectionGeometry& geom, const std::vector<Pose>& poses, const Eigen::Vector2d& w) {
  for (const auto& p : poses) {
    const Eigen::Vector2d d = w - p.center;
    if (std::abs(d.x()) > p.radius || std::abs(d.y()) > p.radius) continue;
    const double u = d.x() * p.c + d.y() * p.s;
    const double v = -d.x() * p.s + d.y() * p.c;
    if (std::abs(u) <= p.half_len && std::abs(v) <= p.half_wid) return kVehicle;
  }
  return static_intensity(geom, w.x(), w.y());
}

}  // namespace

double SpeedProfile::speed_at(double s, double entry_s, double exit_s) const {
  double v = cruise;
  if (decel_start > decel_end) {
    const double a = entry_s - decel_start;
    const double b = entry_s - decel_end;
    if (s >= b && s < exit_s) {
      v = turn;
    } else if (s >= a && s < b) {
      const double u = (s - a) / (b - a);
      v = std::sqrt(cruise * cruise + u * (turn * turn - cruise * cruise));
    } else if (s >= exit_s) {
      v = std::min(exit_cruise, std::sqrt(turn * turn + 2.0 * exit_accel * (s - exit_s)));
    }
  }
  return v * (1.0 + noise_amp * std::sin(kTwoPi * s / noise_wavelength + noise_phase));
}

double LateralProfile::offset(double s, double entry_s, double exit_s) const {
  double off = 0.0;
  for (std::size_t i = 0; i < 3; ++i) off += amp[i] * std::sin(kTwoPi * s / wavelength[i] + phase[i]);
  if (corner_cut != 0.0 && s > entry_s && s < exit_s) {
    const double b = std::sin(std::numbers::pi * (s - entry_s) / (exit_s - entry_s));
    off += corner_cut * b * b;
  }
  return off;
}

void Vehicle::integrate(double max_seconds) {
  s_table.clear();
  double s = start_s;
  s_table.push_back(s);
  const double end = path.length() + 60.0;
  const double h = kTableDt;
  auto f = [&](double x) { return speed.speed_at(x, path.entry_s, path.exit_s); };
  for (double t = 0.0; t < max_seconds && s < end; t += h) {
    const double k1 = f(s);
    const double k2 = f(s + 0.5 * h * k1);
    const double k3 = f(s + 0.5 * h * k2);
    const double k4 = f(s + h * k3);
    s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    s_table.push_back(s);
  }
}

double Vehicle::arc_at(double t) const {
  if (s_table.empty()) fail(ErrorKind::InvalidArgument, "vehicle motion not integrated");
  const double tau = t - start_time;
  if (tau <= 0.0) return s_table.front();
  const double u = tau / kTableDt;
  const auto i = static_cast<std::size_t>(u);
  if (i + 1 < s_table.size()) {
    const double f = u - static_cast<double>(i);
    return (1.0 - f) * s_table[i] + f * s_table[i + 1];
  }
  const double last = s_table.back();
  const double t_last = static_cast<double>(s_table.size() - 1) * kTableDt;
  return last + (tau - t_last) * speed.speed_at(last, path.entry_s, path.exit_s);
}

double Vehicle::time_at_arc(double s) const {
  if (s_table.empty()) fail(ErrorKind::InvalidArgument, "vehicle motion not integrated");
  if (s <= s_table.front()) return start_time;
  const auto it = std::lower_bound(s_table.begin(), s_table.end(), s);
  if (it == s_table.end()) {
    const double last = s_table.back();
    return start_time + static_cast<double>(s_table.size() - 1) * kTableDt +
           (s - last) / speed.speed_at(last, path.entry_s, path.exit_s);
  }
  const auto i = static_cast<std::size_t>(it - s_table.begin());
  const double f = (s - s_table[i - 1]) / (s_table[i] - s_table[i - 1]);
  return start_time + (static_cast<double>(i - 1) + f) * kTableDt;
}

bool Vehicle::active(double t) const { return t >= start_time && arc_at(t) <= path.length(); }

Eigen::Vector2d Vehicle::position(double t) const {
  const double s = arc_at(t);
  const Eigen::Vector2d tan = path.smooth_tangent(s);
  return path.at(s) + Eigen::Vector2d(-tan.y(), tan.x()) * lateral.offset(s, path.entry_s, path.exit_s);
}

Eigen::Vector2d Vehicle::velocity(double t) const {
  constexpr double h = 0.02;
  const double lo = std::max(t - h, start_time);
  const double hi = std::max(t + h, start_time + h);
  return (position(hi) - position(lo)) / (hi - lo);
}

World gen_world(std::uint64_t seed, int n_pairs) {
  if (n_pairs < 1) fail(ErrorKind::InvalidArgument, "n_pairs must be >= 1");
  World world;
  world.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<Direction> dirs;
  std::vector<Yield> yields;
  for (int i = 0; i < n_pairs; ++i) {
    dirs.push_back(static_cast<Direction>(i % 3));
    yields.push_back(static_cast<Yield>(i % 2));
  }
  std::shuffle(dirs.begin(), dirs.end(), rng);
  std::shuffle(yields.begin(), yields.end(), rng);
  for (int i = 0; i < n_pairs; ++i) {
    PairDraft d = draft_pair(rng, world.geom, dirs[static_cast<std::size_t>(i)], yields[static_cast<std::size_t>(i)]);
    d.ego.id = 2 * i + 1;
    d.target.id = 2 * i + 2;
    d.pair.pair_id = i;
    d.pair.ego = world.vehicles.size();
    world.vehicles.push_back(std::move(d.ego));
    d.pair.target = world.vehicles.size();
    world.vehicles.push_back(std::move(d.target));
    world.pairs.push_back(d.pair);
  }
  return world;
}

World gen_scene(std::uint64_t seed, const SceneOptions& opts) {
  if (opts.n_pairs < 1) fail(ErrorKind::InvalidArgument, "n_pairs must be >= 1");
  World world;
  world.seed = seed;
  std::mt19937_64 rng(seed);
  const double step = 0.1;
  auto separated = [&](const Vehicle& a, const Vehicle& b) {
    for (double t = 0.0; t <= opts.duration_s + 1e-9; t += step) {
      if (a.active(t) && b.active(t) && (a.position(t) - b.position(t)).norm() < opts.min_separation_m) return false;
    }
    return true;
  };
  for (int i = 0; i < opts.n_pairs; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
      const auto dir = static_cast<Direction>(std::uniform_int_distribution<int>(0, 2)(rng));
      const auto want = static_cast<Yield>(std::uniform_int_distribution<int>(0, 1)(rng));
      auto draft = try_pair(rng, world.geom, dir, want);
      if (!draft) continue;
      rotate_pair(*draft, world.geom, std::uniform_int_distribution<int>(0, 3)(rng));
      shift_time(*draft, uniform(rng, opts.start_lo, opts.start_hi));
      if (!separated(draft->ego, draft->target)) continue;
      bool ok = true;
      for (const auto& v : world.vehicles) {
        if (!separated(v, draft->ego) || !separated(v, draft->target)) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      draft->ego.id = 2 * i + 1;
      draft->target.id = 2 * i + 2;
      draft->pair.pair_id = i;
      draft->pair.ego = world.vehicles.size();
      world.vehicles.push_back(std::move(draft->ego));
      draft->pair.target = world.vehicles.size();
      world.vehicles.push_back(std::move(draft->target));
      world.pairs.push_back(draft->pair);
      placed = true;
    }
    if (!placed) fail(ErrorKind::EstimationFailed, "could not place pair " + std::to_string(i) + " in the scene");
  }
  return world;
}

PairSample pair_sample(const World& world, const InteractionPair& pair) {
  const Vehicle& ego = world.vehicles.at(pair.ego);
  const Vehicle& tgt = world.vehicles.at(pair.target);
  PairSample p;
  p.pair_id = pair.pair_id;
  p.dt = world.dt;
  p.target_arm = tgt.path.approach;
  p.ego_arm = ego.path.approach;
  p.direction = tgt.direction;
  p.ego_direction = ego.direction;
  p.yield = pair.yield;
  const auto n = static_cast<int>(std::floor((pair.end_time - pair.start_time) / world.dt + 1e-9)) + 1;
  for (int k = 0; k < n; ++k) {
    const double t = pair.start_time + k * world.dt;
    PairStep s;
    s.features = pair_features(ego.position(t), ego.velocity(t), tgt.position(t), tgt.velocity(t));
    s.target_dist_to_entry = tgt.path.entry_s - tgt.arc_at(t);
    p.steps.push_back(s);
    p.future_target_xy.push_back(s.target_xy());
  }
  return p;
}

DatasetSplits gen_pairs_dataset(const World& world, const std::array<double, 3>& ratios) {
  for (double r : ratios) {
    if (!(r >= 0.0)) fail(ErrorKind::InvalidArgument, "split ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    fail(ErrorKind::InvalidArgument, "split ratios must sum to 1");
  }
  const auto n = static_cast<long>(world.pairs.size());
  const long n_train = std::lround(ratios[0] * static_cast<double>(n));
  const long n_val = std::min(n - n_train, std::lround(ratios[1] * static_cast<double>(n)));
  const long n_test = n - n_train - n_val;
  const long counts[3] = {n_train, n_val, n_test};
  for (int i = 0; i < 3; ++i) {
    if (ratios[static_cast<std::size_t>(i)] > 0.0 && counts[i] < 1) {
      fail(ErrorKind::InvalidArgument, "too few pairs for every split to be non-empty");
    }
  }
  std::vector<std::size_t> order(world.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(world.seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplits out;
  for (long i = 0; i < n; ++i) {
    PairSample s = pair_sample(world, world.pairs[order[static_cast<std::size_t>(i)]]);
    if (i < n_train) {
      out.train.push_back(std::move(s));
    } else if (i < n_train + n_val) {
      out.validation.push_back(std::move(s));
    } else {
      out.test.push_back(std::move(s));
    }
  }
  return out;
}

// ---- rendering ---------------------------------------------------------

Eigen::Vector2d world_to_canvas(const Eigen::Vector2d& w, const RenderOptions& opts) {
  return {0.5 * opts.width + w.x() / opts.meters_per_pixel, 0.5 * opts.height - w.y() / opts.meters_per_pixel};
}

Eigen::Vector2d canvas_to_world(const Eigen::Vector2d& px, const RenderOptions& opts) {
  return {(px.x() - 0.5 * opts.width) * opts.meters_per_pixel, (0.5 * opts.height - px.y()) * opts.meters_per_pixel};
}

RoadFrame scene_road_frame(const IntersectionGeometry& geom, const RenderOptions& opts) {
  const double h = geom.box_half();
  const double e = h + geom.arm_length;
  const double a = geom.lanes_per_side * geom.lane_width;
  const Polyline centerline{world_to_canvas({0.0, -e}, opts), world_to_canvas({0.0, e}, opts)};
  RoadFrame rf = build_road_frame(centerline, opts.meters_per_pixel, LaneSpec{geom.lane_width, geom.lanes_per_side},
                                  {geom.arm_length, geom.arm_length + 2.0 * h});
  rf.intersection_center_px = world_to_canvas({0.0, 0.0}, opts);
  const std::vector<Eigen::Vector2d> cross{{a, -e},  {a, -h},  {h, -h},  {h, -a},  {e, -a},  {e, a},   {h, a},
                                           {h, h},   {a, h},   {a, e},   {-a, e},  {-a, h},  {-h, h},  {-h, a},
                                           {-e, a},  {-e, -a}, {-h, -a}, {-h, -h}, {-a, -h}, {-a, -e}};
  Polyline poly;
  for (const auto& p : cross) poly.push_back(world_to_canvas(p, opts));
  rf.road_polygons_px.push_back(std::move(poly));
  return rf;
}

std::vector<Homography> jitter_sequence(const JitterModel& jitter, int frames, int width, int height,
                                        std::uint64_t seed) {
  if (frames < 1) fail(ErrorKind::InvalidArgument, "need at least one frame");
  std::vector<Homography> out;
  out.reserve(static_cast<std::size_t>(frames));
  std::mt19937_64 rng(seed);
  Eigen::Matrix<double, 5, 1> theta = Eigen::Matrix<double, 5, 1>::Zero();
  const Eigen::Matrix<double, 5, 1> bound(jitter.max_translation_px, jitter.max_translation_px,
                                          jitter.max_rotation_deg * std::numbers::pi / 180.0, jitter.max_perspective,
                                          jitter.max_perspective);
  Homography center = translation(0.5 * width, 0.5 * height);
  Homography uncenter = translation(-0.5 * width, -0.5 * height);
  for (int k = 0; k < frames; ++k) {
    if (k > 0 && jitter.enabled) {
      Eigen::Matrix<double, 5, 1> u;
      for (int i = 0; i < 5; ++i) u(i) = uniform(rng, -bound(i), bound(i));
      theta = jitter.smoothing * theta + (1.0 - jitter.smoothing) * u;
    }
    const double c = std::cos(theta(2));
    const double s = std::sin(theta(2));
    Homography m;
    m << c, -s, theta(0), s, c, theta(1), theta(3), theta(4), 1.0;
    out.push_back(normalize_homography(center * m * uncenter));
  }
  return out;
}

double scene_intensity(const World& world, const Eigen::Vector2d& w, double t) {
  return intensity(world.geom, poses_at(world, t), w);
}

RenderResult render_frames(const World& world, const JitterModel& jitter, const RenderOptions& opts) {
  if (opts.width < 256 || opts.height < 256) fail(ErrorKind::InvalidArgument, "frames must be at least 256x256");
  if (!(opts.meters_per_pixel > 0.0) || !(opts.fps > 0.0) || opts.frames < 1 || opts.supersample < 1 ||
      opts.blur_passes < 0) {
    fail(ErrorKind::InvalidArgument, "invalid render options");
  }
  RenderResult out;
  out.road = scene_road_frame(world.geom, opts);
  out.jitter = jitter_sequence(jitter, opts.frames, opts.width, opts.height, opts.seed);
  std::mt19937_64 noise_rng(opts.seed ^ 0x5deece66dULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double h = world.geom.box_half();
  const double len = world.geom.arm_length;
  const int ss = opts.supersample;
  const double inv = 1.0 / (ss * ss);

  for (int k = 0; k < opts.frames; ++k) {
    const double t = opts.start_time + k / opts.fps;
    const Homography& j = out.jitter[static_cast<std::size_t>(k)];
    const Homography jinv = normalize_homography(j.inverse());
    out.truth_h.push_back(jinv);
    const std::vector<Pose> poses = poses_at(world, t);

    ImageBuffer img(opts.height, opts.width);
    for (int r = 0; r < opts.height; ++r) {
      for (int c = 0; c < opts.width; ++c) {
        double acc = 0.0;
        for (int sy = 0; sy < ss; ++sy) {
          for (int sx = 0; sx < ss; ++sx) {
            const Eigen::Vector2d p(c + (sx + 0.5) / ss, r + (sy + 0.5) / ss);
            acc += intensity(world.geom, poses, canvas_to_world(apply(jinv, p), opts));
          }
        }
        img(r, c) = acc * inv;
      }
    }
    for (int b = 0; b < opts.blur_passes; ++b) img = binomial_blur(img);
    out.frames.push_back(std::move(img));

    for (const auto& v : world.vehicles) {
      if (!v.active(t)) continue;
      const Eigen::Vector2d w = v.position(t);
      PixelDetection d;
      d.frame = k;
      d.truth_id = v.id;
      d.length_m = v.length;
      d.width_m = v.width;
      d.px = apply(j, world_to_canvas(w, opts));
      if (opts.detection_sigma_m > 0.0) {
        const double sigma_px = opts.detection_sigma_m / opts.meters_per_pixel;
        d.px += sigma_px * Eigen::Vector2d(noise(noise_rng), noise(noise_rng));
      }
      d.off_frame = !(d.px.x() >= 0.0 && d.px.x() < opts.width && d.px.y() >= 0.0 && d.px.y() < opts.height);
      out.detections.push_back(d);
      out.truth.push_back({k, v.id, w, Eigen::Vector2d(w.y() + h + len, -w.x())});
    }
  }
  return out;
}

// ---- file formats ----------------------------------------------------------

void write_pixel_detections(const std::filesystem::path& path, const std::vector<PixelDetection>& dets,
                            const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  if (!header_comments.empty()) out << nlohmann::json{{"provenance", header_comments}}.dump() << "\n";
  for (const auto& d : dets) {
    if (d.off_frame) continue;
    out << nlohmann::json{{"frame", d.frame},       {"u_px", d.px.x()},      {"v_px", d.px.y()},
                          {"length_m", d.length_m}, {"width_m", d.width_m}, {"score", 1.0},
                          {"truth_id", d.truth_id}}
               .dump()
        << "\n";
  }
}

std::vector<PixelDetection> read_pixel_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<PixelDetection> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("provenance")) continue;
      PixelDetection d;
      d.frame = j.at("frame").get<int>();
      d.px = Eigen::Vector2d(j.at("u_px").get<double>(), j.at("v_px").get<double>());
      d.length_m = j.value("length_m", 4.5);
      d.width_m = j.value("width_m", 1.8);
      d.truth_id = j.value("truth_id", 0);
      out.push_back(d);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Io, "pixel detections " + path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_truth_homographies(const std::filesystem::path& path, const std::vector<Homography>& hs,
                              const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "frame_index,h00,h01,h02,h10,h11,h12,h20,h21\n" << std::setprecision(17);
  for (std::size_t k = 0; k < hs.size(); ++k) {
    const Homography h = normalize_homography(hs[k]);
    out << k;
    for (int i = 0; i < 8; ++i) out << "," << h(i / 3, i % 3);
    out << "\n";
  }
}

std::vector<Homography> read_truth_homographies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<Homography> out;
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
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() < 9) fail(ErrorKind::Io, "truth homographies: short row");
    Homography h;
    h << v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], 1.0;
    out.push_back(h);
  }
  return out;
}

}  // namespace urbanflow
