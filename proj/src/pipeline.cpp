#include "urbanflow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "json.hpp"
#include "urbanflow/error.hpp"
#include "urbanflow/predict.hpp"
#include "urbanflow/roadmap.hpp"

namespace urbanflow {
namespace fs = std::filesystem;

namespace {

const char* const kModeNames[3] = {"plain", "intention", "conditioned"};

struct Context {
  const RunOptions& opts;
  Config cfg;
  std::uint64_t seed = 0;
  std::uint64_t hash = 0;

  fs::path out(const char* name) const { return opts.out_dir / name; }
  std::vector<std::string> header(const std::string& stage) const { return {provenance_line(stage, hash, seed)}; }
  fs::path frames_dir() const { return opts.frames.value_or(out(artifact::kFrames)); }
  fs::path pixel_detections() const { return opts.detections.value_or(out(artifact::kPixelDetections)); }
  fs::path geometry() const { return opts.geometry.value_or(out(artifact::kGeometry)); }
  fs::path model_dir() const {
    if (opts.model && !fs::is_regular_file(*opts.model)) return *opts.model;
    if (opts.model) return opts.model->parent_path();
    return out(artifact::kModels);
  }
};

void require(const fs::path& p) {
  if (!fs::exists(p)) fail(ErrorKind::Dependency, "missing upstream artifact " + p.string());
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

std::string frame_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.pgm", k);
  return buf;
}

// ---- stages --------------------------------------------------------------

void stage_gen(const Context& ctx) {
  const auto hdr = ctx.header("gen");
  fs::create_directories(ctx.opts.out_dir);
  const int dataset_pairs = ctx.cfg.get_int("gen.dataset_pairs", 0);
  if (dataset_pairs > 0) {
    const World world = gen_world(ctx.seed, dataset_pairs);
    const auto ratios = parse_list(ctx.cfg.get_string("gen.split", "0.7,0.1,0.2"));
    if (ratios.size() != 3) fail(ErrorKind::InvalidArgument, "gen.split needs three ratios");
    const DatasetSplits splits = gen_pairs_dataset(world, {ratios[0], ratios[1], ratios[2]});
    write_pairs(ctx.out(artifact::kPairsTrain), splits.train, hdr);
    write_pairs(ctx.out(artifact::kPairsVal), splits.validation, hdr);
    write_pairs(ctx.out(artifact::kPairsTest), splits.test, hdr);
  }
  if (!ctx.cfg.get_bool("gen.render", true)) return;

  const RenderOptions ro = render_config(ctx.cfg, ctx.seed);
  SceneOptions so = scene_config(ctx.cfg);
  so.duration_s = ro.start_time + ro.frames / ro.fps;
  const World scene = gen_scene(ctx.seed, so);
  const RenderResult rr = render_frames(scene, jitter_config(ctx.cfg), ro);

  const fs::path dir = ctx.out(artifact::kFrames);
  fs::create_directories(dir);
  for (std::size_t k = 0; k < rr.frames.size(); ++k) write_pgm(dir / frame_name(k), rr.frames[k], hdr);
  write_truth_homographies(ctx.out(artifact::kTruthHomographies), rr.truth_h, hdr);
  write_pixel_detections(ctx.out(artifact::kPixelDetections), rr.detections, hdr);
  write_road_geometry(ctx.out(artifact::kGeometry), rr.road, hdr);
  write_truth_road(ctx.out(artifact::kTruthRoad), rr.truth, hdr);
}

std::vector<ImageBuffer> load_frames(const fs::path& src) {
  require(src);
  if (fs::is_regular_file(src)) return read_raw_stream(src);
  std::vector<ImageBuffer> frames;
  for (const auto& f : list_frame_files(src)) frames.push_back(read_pgm(f));
  if (frames.empty()) fail(ErrorKind::Dependency, "no frames in " + src.string());
  return frames;
}

void stage_stabilize(const Context& ctx) {
  const fs::path src = ctx.frames_dir();
  require(src);
  Stabilizer stab(stabilizer_config(ctx.cfg));
  std::vector<FrameResult> results;
  if (fs::is_regular_file(src)) {
    for (const auto& f : read_raw_stream(src)) results.push_back(stab.push(f));
  } else {
    const auto files = list_frame_files(src);
    if (files.empty()) fail(ErrorKind::Dependency, "no frames in " + src.string());
    for (const auto& f : files) results.push_back(stab.push(read_pgm(f)));
  }
  write_homography_log(ctx.out(artifact::kHomographies), results, ctx.header("stabilize"));
}

void stage_transform(const Context& ctx) {
  const fs::path hpath = ctx.out(artifact::kHomographies);
  const fs::path dpath = ctx.pixel_detections();
  const fs::path gpath = ctx.geometry();
  require(hpath);
  require(dpath);
  require(gpath);
  std::map<int, Homography> hs;
  for (const auto& f : read_homography_log(hpath)) hs[f.frame_index] = f.h;
  const RoadFrame rf = read_road_geometry(gpath);
  const bool masked = ctx.cfg.get_bool("transform.road_mask", true) && !rf.road_polygons_px.empty();

  std::vector<Measurement> out;
  std::vector<int> truth;
  for (const auto& d : read_pixel_detections(dpath)) {
    const auto it = hs.find(d.frame);
    if (it == hs.end()) continue;
    const Eigen::Vector2d p = apply(it->second, d.px);
    if (masked && !inside_polygons(p, rf.road_polygons_px)) continue;
    RoadPosition rp;
    try {
      rp = image_to_road(p, rf);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::AmbiguousProjection) continue;
      throw;
    }
    Measurement m;
    m.frame = d.frame;
    m.z = Eigen::Vector2d(rp.x, rp.y);
    m.length = d.length_m;
    m.width = d.width_m;
    m.source_index = static_cast<int>(out.size());
    out.push_back(m);
    truth.push_back(d.truth_id);
  }
  const auto hdr = ctx.header("transform");
  write_detections(ctx.out(artifact::kDetections), out, hdr);
  std::ofstream tf(ctx.out(artifact::kDetectionTruth));
  if (!tf) fail(ErrorKind::Io, "cannot write detection truth");
  tf << "# " << hdr.front() << "\nrow,truth_id\n";
  for (std::size_t i = 0; i < truth.size(); ++i) tf << i << "," << truth[i] << "\n";
}

void stage_track(const Context& ctx) {
  const fs::path dpath = ctx.opts.detections.value_or(ctx.out(artifact::kDetections));
  require(dpath);
  const auto tracks = run_tracker(read_detections(dpath), tracking_model(ctx.cfg), tracker_config(ctx.cfg));
  write_tracks(ctx.out(artifact::kTracks), tracks, ctx.header("track"));
}

void stage_smooth(const Context& ctx) {
  const fs::path tpath = ctx.out(artifact::kTracks);
  require(tpath);
  std::optional<RoadFrame> rf;
  if (fs::exists(ctx.geometry())) rf = read_road_geometry(ctx.geometry());
  const Model model = tracking_model(ctx.cfg);
  std::vector<TrajectoryRow> rows;
  for (const auto& t : read_tracks(tpath)) {
    if (!t.was_confirmed || t.history.size() < 2) continue;
    const auto states = rts_smooth(t, model);
    const auto r = trajectory_rows(t, states, rf ? &*rf : nullptr);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_trajectories(ctx.out(artifact::kTrajectories), rows, ctx.header("smooth"));
}

void stage_predict_train(const Context& ctx) {
  const fs::path ppath = ctx.out(artifact::kPairsTrain);
  require(ppath);
  const auto train = read_pairs(ppath);
  if (train.empty()) fail(ErrorKind::InvalidInput, "empty training set " + ppath.string());
  const AblationConfig ac = ablation_config(ctx.cfg, ctx.seed);
  const fs::path dir = ctx.model_dir();
  fs::create_directories(dir);
  const auto hdr = ctx.header("predict-train");

  IntentionModel intent = IntentionModel::create(ac.hidden, ac.intention_train.seed);
  train_intention(intent, train, ac.intention_train);
  save_model(dir / "intention.model", intent, hdr);
  for (int i = 0; i < 3; ++i) {
    TrajectoryModel m = TrajectoryModel::create(static_cast<TrajectoryMode>(i), ac.window, ac.horizon, ac.hidden,
                                                ac.trajectory_train.seed);
    const auto samples = trajectory_samples(m, train, ac.geom, ac.train_stride, ac.bins.lo, ac.bins.hi,
                                            ac.teacher_forcing ? nullptr : &intent);
    train_trajectory(m, samples, ac.trajectory_train);
    save_model(dir / (std::string("trajectory_") + kModeNames[i] + ".model"), m, hdr);
  }
}

void stage_predict_eval(const Context& ctx) {
  const fs::path ppath = ctx.out(artifact::kPairsTest);
  require(ppath);
  const auto test = read_pairs(ppath);
  const AblationConfig ac = ablation_config(ctx.cfg, ctx.seed);
  const fs::path dir = ctx.model_dir();
  require(dir / "intention.model");
  const IntentionModel intent = load_intention_model(dir / "intention.model");

  std::vector<fs::path> model_files;
  if (ctx.opts.model && fs::is_regular_file(*ctx.opts.model)) {
    model_files.push_back(*ctx.opts.model);
  } else {
    for (const char* name : kModeNames) model_files.push_back(dir / (std::string("trajectory_") + name + ".model"));
  }
  const auto hdr = ctx.header("predict-eval");
  const int stride = ctx.cfg.get_int("predict.eval_stride", 1);
  std::vector<std::string> names;
  std::vector<Evaluation> evals;
  for (const auto& f : model_files) {
    require(f);
    const TrajectoryModel m = load_trajectory_model(f);
    const LstmPredictor predictor(&intent, &m, ac.geom);
    evals.push_back(evaluate(predictor, test, ac.bins, stride));
    names.emplace_back(to_string(m.mode));
    write_bin_metrics(ctx.opts.out_dir / ("predict_bins_" + names.back() + ".csv"), evals.back(), hdr);
  }
  write_summary(ctx.out(artifact::kPredictSummary), names, evals, hdr);
}

std::vector<int> read_detection_truth(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<int> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    out.push_back(std::stoi(line.substr(comma + 1)));
  }
  return out;
}

void stage_metrics(const Context& ctx) {
  const auto hdr = ctx.header("metrics");
  std::vector<std::pair<std::string, double>> summary;
  bool any = false;

  const fs::path hpath = ctx.out(artifact::kHomographies);
  const fs::path tpath = ctx.out(artifact::kTruthHomographies);
  if (fs::exists(hpath) && fs::exists(tpath)) {
    any = true;
    const auto est = read_homography_log(hpath);
    const auto truth = read_truth_homographies(tpath);
    const auto frames = load_frames(ctx.frames_dir());
    if (est.size() > frames.size() || est.size() > truth.size()) {
      fail(ErrorKind::InvalidInput, "homography log longer than the frame set");
    }
    const int w = static_cast<int>(frames.front().cols());
    const int h = static_cast<int>(frames.front().rows());
    std::ofstream out(ctx.out(artifact::kStabilizeMetrics));
    if (!out) fail(ErrorKind::Io, "cannot write stabilization metrics");
    out << "# " << hdr.front() << "\nframe_index,corner_error_px,ssim_raw,ssim_stabilized\n" << std::setprecision(10);
    double err = 0.0;
    double pre = 0.0;
    double post = 0.0;
    for (std::size_t k = 0; k < est.size(); ++k) {
      const double e = corner_error(est[k].h, truth[k], w, h);
      const double s_pre = ssim(frames[0], frames[k]);
      const WarpResult wr = warp(frames[k], est[k].h);
      const double s_post = ssim(frames[0], wr.image, wr.valid);
      out << k << "," << e << "," << s_pre << "," << s_post << "\n";
      err += e;
      pre += s_pre;
      post += s_post;
    }
    const double n = static_cast<double>(est.size());
    summary.emplace_back("mean_corner_error_px", err / n);
    summary.emplace_back("mean_ssim_raw", pre / n);
    summary.emplace_back("mean_ssim_stabilized", post / n);
  }

  const fs::path trk = ctx.out(artifact::kTracks);
  const fs::path traj = ctx.out(artifact::kTrajectories);
  const fs::path dtruth = ctx.out(artifact::kDetectionTruth);
  const fs::path rtruth = ctx.out(artifact::kTruthRoad);
  if (fs::exists(trk) && fs::exists(traj) && fs::exists(dtruth) && fs::exists(rtruth)) {
    any = true;
    const auto scores =
        score_tracks(read_tracks(trk), read_trajectories(traj), read_detection_truth(dtruth), read_truth_road(rtruth));
    std::ofstream out(ctx.out(artifact::kTrackingMetrics));
    if (!out) fail(ErrorKind::Io, "cannot write tracking metrics");
    out << "# " << hdr.front() << "\ntrack_id,truth_id,points,rms_m,identity_switches\n" << std::setprecision(10);
    double worst = 0.0;
    int switches = 0;
    for (const auto& s : scores) {
      out << s.track_id << "," << s.truth_id << "," << s.points << "," << s.rms_m << "," << s.identity_switches
          << "\n";
      worst = std::max(worst, s.rms_m);
      switches += s.identity_switches;
    }
    summary.emplace_back("confirmed_tracks", static_cast<double>(scores.size()));
    summary.emplace_back("max_track_rms_m", worst);
    summary.emplace_back("identity_switches", switches);
  }
  if (!any) fail(ErrorKind::Dependency, "missing upstream artifact " + hpath.string() + " or " + trk.string());

  std::ofstream out(ctx.out(artifact::kMetricsSummary));
  if (!out) fail(ErrorKind::Io, "cannot write metrics summary");
  out << "# " << hdr.front() << "\nmetric,value\n" << std::setprecision(10);
  for (const auto& [k, v] : summary) out << k << "," << v << "\n";
}

using StageFn = void (*)(const Context&);

const std::map<std::string, StageFn>& stage_table() {
  static const std::map<std::string, StageFn> table{
      {"gen", stage_gen},         {"stabilize", stage_stabilize},         {"transform", stage_transform},
      {"track", stage_track},     {"smooth", stage_smooth},               {"predict-train", stage_predict_train},
      {"predict-eval", stage_predict_eval}, {"metrics", stage_metrics}};
  return table;
}

void write_error(const fs::path& path, const StageOutcome& o) {
  std::ofstream out(path);
  out << nlohmann::json{{"stage", o.stage}, {"error", o.error_kind}, {"message", o.message}}.dump() << "\n";
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"gen",    "stabilize",     "transform",    "track",
                                              "smooth", "predict-train", "predict-eval", "metrics"};
  return names;
}

bool RunReport::ok() const {
  return std::all_of(stages.begin(), stages.end(), [](const StageOutcome& s) { return s.ok; });
}

std::vector<std::string> configured_stages(const Config& cfg) {
  std::vector<std::string> out;
  std::stringstream ss(cfg.get_string("pipeline.stages", "stabilize,transform,track,smooth"));
  std::string s;
  while (std::getline(ss, s, ',')) {
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
    if (!s.empty()) out.push_back(s);
  }
  return out;
}

RunReport run_stages(std::vector<std::string> stages, const RunOptions& opts) {
  RunReport report;
  Context ctx{opts, opts.config};
  ctx.seed = opts.seed.value_or(opts.config.get_u64("seed", 1));
  ctx.cfg.set("seed", std::to_string(ctx.seed));
  ctx.hash = ctx.cfg.hash();

  const auto& order = stage_names();
  for (const auto& s : stages) {
    if (std::find(order.begin(), order.end(), s) == order.end()) {
      StageOutcome o{s, false, std::string(to_string(ErrorKind::InvalidArgument)), "unknown stage '" + s + "'"};
      report.stages.push_back(o);
      fs::create_directories(opts.out_dir);
      write_error(opts.out_dir / artifact::kError, o);
      return report;
    }
  }
  std::sort(stages.begin(), stages.end(), [&](const std::string& a, const std::string& b) {
    return std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), b);
  });
  stages.erase(std::unique(stages.begin(), stages.end()), stages.end());

  fs::create_directories(opts.out_dir);
  fs::remove(opts.out_dir / artifact::kError);
  {
    std::ofstream cfg_out(opts.out_dir / artifact::kEffectiveConfig);
    cfg_out << "# " << provenance_line("config", ctx.hash, ctx.seed) << "\n" << ctx.cfg.dump();
  }
  std::ofstream manifest(opts.out_dir / artifact::kManifest);
  manifest << "# " << provenance_line("pipeline", ctx.hash, ctx.seed) << "\n";

  for (const auto& s : stages) {
    StageOutcome o{s, true, "", ""};
    try {
      stage_table().at(s)(ctx);
    } catch (const Error& e) {
      o.ok = false;
      o.error_kind = std::string(to_string(e.kind()));
      o.message = e.what();
    } catch (const std::exception& e) {
      o.ok = false;
      o.error_kind = "Internal";
      o.message = e.what();
    }
    report.stages.push_back(o);
    manifest << s << "," << (o.ok ? "ok" : "failed") << "\n";
    if (!o.ok) {
      write_error(opts.out_dir / artifact::kError, o);
      break;
    }
  }
  return report;
}

// ---- configuration ---------------------------------------------------------

StabilizerConfig stabilizer_config(const Config& cfg) {
  StabilizerConfig c;
  c.ssim_threshold = cfg.get_double("stabilize.ssim_threshold", c.ssim_threshold);
  c.ecc_max_iters = cfg.get_int("stabilize.ecc_max_iters", c.ecc_max_iters);
  c.ecc_eps = cfg.get_double("stabilize.ecc_eps", c.ecc_eps);
  c.ds_factor = cfg.get_int("stabilize.ds_factor", c.ds_factor);
  c.ransac_iters = cfg.get_int("stabilize.ransac_iters", c.ransac_iters);
  c.ransac_inlier_px = cfg.get_double("stabilize.ransac_inlier_px", c.ransac_inlier_px);
  c.ransac_seed = cfg.get_u64("stabilize.ransac_seed", c.ransac_seed);
  c.max_match_displacement_px = cfg.get_double("stabilize.max_match_displacement_px", c.max_match_displacement_px);
  c.ecc_presmooth = cfg.get_bool("stabilize.ecc_presmooth", c.ecc_presmooth);
  c.validate();
  return c;
}

TrackerConfig tracker_config(const Config& cfg) {
  TrackerConfig c;
  c.gate_m = cfg.get_double("track.gate_m", c.gate_m);
  c.confirm_hits = cfg.get_int("track.confirm_hits", c.confirm_hits);
  c.max_misses = cfg.get_int("track.max_misses", c.max_misses);
  c.init_velocity_var = cfg.get_double("track.init_velocity_var", c.init_velocity_var);
  return c;
}

Model tracking_model(const Config& cfg) {
  return Model::constant_velocity(cfg.get_double("track.dt", 1.0 / 30.0), cfg.get_double("track.accel_var", 4.0),
                                  cfg.get_double("track.meas_sigma_m", 0.15));
}

JitterModel jitter_config(const Config& cfg) {
  JitterModel j;
  j.max_translation_px = cfg.get_double("gen.jitter_translation_px", j.max_translation_px);
  j.max_rotation_deg = cfg.get_double("gen.jitter_rotation_deg", j.max_rotation_deg);
  j.max_perspective = cfg.get_double("gen.jitter_perspective", j.max_perspective);
  j.smoothing = cfg.get_double("gen.jitter_smoothing", j.smoothing);
  j.enabled = cfg.get_bool("gen.jitter", j.enabled);
  return j;
}

RenderOptions render_config(const Config& cfg, std::uint64_t seed) {
  RenderOptions r;
  r.width = cfg.get_int("gen.width", r.width);
  r.height = cfg.get_int("gen.height", r.height);
  r.meters_per_pixel = cfg.get_double("gen.meters_per_pixel", r.meters_per_pixel);
  r.fps = cfg.get_double("gen.fps", r.fps);
  r.frames = cfg.get_int("gen.frames", r.frames);
  r.start_time = cfg.get_double("gen.start_time_s", r.start_time);
  r.detection_sigma_m = cfg.get_double("gen.detection_sigma_m", r.detection_sigma_m);
  r.supersample = cfg.get_int("gen.supersample", r.supersample);
  r.blur_passes = cfg.get_int("gen.blur_passes", r.blur_passes);
  r.seed = seed;
  return r;
}

SceneOptions scene_config(const Config& cfg) {
  SceneOptions s;
  s.n_pairs = cfg.get_int("gen.n_pairs", s.n_pairs);
  s.start_lo = cfg.get_double("gen.pair_start_lo_s", s.start_lo);
  s.start_hi = cfg.get_double("gen.pair_start_hi_s", s.start_hi);
  s.min_separation_m = cfg.get_double("gen.min_separation_m", s.min_separation_m);
  return s;
}

AblationConfig ablation_config(const Config& cfg, std::uint64_t seed) {
  AblationConfig a;
  a.hidden = cfg.get_int("predict.hidden", a.hidden);
  a.window = cfg.get_int("predict.window", a.window);
  a.horizon = cfg.get_int("predict.horizon", a.horizon);
  a.train_stride = cfg.get_int("predict.train_stride", a.train_stride);
  a.teacher_forcing = cfg.get_bool("predict.teacher_forcing", a.teacher_forcing);
  auto train = [&](const std::string& prefix, TrainParams& tp) {
    tp.lr = cfg.get_double(prefix + ".lr", tp.lr);
    tp.epochs = cfg.get_int(prefix + ".epochs", tp.epochs);
    tp.batch_size = cfg.get_int(prefix + ".batch_size", tp.batch_size);
    tp.grad_clip = cfg.get_double(prefix + ".grad_clip", tp.grad_clip);
    tp.seed = seed;
  };
  train("predict.intention", a.intention_train);
  train("predict.trajectory", a.trajectory_train);
  a.bins.width = cfg.get_double("predict.bin_width_m", a.bins.width);
  a.bins.lo = cfg.get_double("predict.bin_lo_m", a.bins.lo);
  a.bins.hi = cfg.get_double("predict.bin_hi_m", a.bins.hi);
  return a;
}

// ---- evaluation against generator truth ----------------------------------

std::vector<TrackScore> score_tracks(const std::vector<KalmanTrack>& tracks,
                                     const std::vector<TrajectoryRow>& smoothed,
                                     const std::vector<int>& detection_truth,
                                     const std::vector<TruthState>& truth) {
  std::map<std::pair<int, int>, Eigen::Vector2d> truth_at;
  for (const auto& t : truth) truth_at[{t.truth_id, t.frame}] = t.road;
  std::map<int, std::vector<const TrajectoryRow*>> rows_of;
  for (const auto& r : smoothed) rows_of[r.record.track_id].push_back(&r);

  std::vector<TrackScore> out;
  for (const auto& t : tracks) {
    if (!t.was_confirmed) continue;
    TrackScore s;
    s.track_id = t.track_id;
    std::map<int, int> votes;
    int prev = 0;
    bool first = true;
    for (const auto& e : t.history) {
      if (!e.measurement) continue;
      const int idx = e.measurement->source_index;
      if (idx < 0 || idx >= static_cast<int>(detection_truth.size())) {
        fail(ErrorKind::InvalidInput, "track measurement has no detection truth row");
      }
      const int id = detection_truth[static_cast<std::size_t>(idx)];
      ++votes[id];
      if (!first && id != prev) ++s.identity_switches;
      prev = id;
      first = false;
    }
    s.truth_id = votes.empty() ? 0
                               : std::max_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) {
                                   return a.second < b.second;
                                 })->first;
    double sq = 0.0;
    for (const TrajectoryRow* r : rows_of[t.track_id]) {
      const auto it = truth_at.find({s.truth_id, r->record.frame});
      if (it == truth_at.end()) continue;
      sq += (Eigen::Vector2d(r->record.road_pos.x, r->record.road_pos.y) - it->second).squaredNorm();
      ++s.points;
    }
    s.rms_m = s.points > 0 ? std::sqrt(sq / s.points) : std::numeric_limits<double>::infinity();
    out.push_back(s);
  }
  return out;
}

void write_truth_road(const fs::path& path, const std::vector<TruthState>& truth,
                      const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "frame,truth_id,x_m,y_m,world_x_m,world_y_m\n" << std::setprecision(17);
  for (const auto& t : truth) {
    out << t.frame << "," << t.truth_id << "," << t.road.x() << "," << t.road.y() << "," << t.world.x() << ","
        << t.world.y() << "\n";
  }
}

std::vector<TruthState> read_truth_road(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<TruthState> out;
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
    if (v.size() < 6) fail(ErrorKind::Io, "truth road: short row");
    out.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), {v[4], v[5]}, {v[2], v[3]}});
  }
  return out;
}

}  // namespace urbanflow
