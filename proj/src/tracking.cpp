#include "urbanflow/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace urbanflow {
namespace {

Eigen::VectorXd position(const Measurement& m) { return Eigen::VectorXd(m.z); }

State spawn_state(const Measurement& m, const Model& model, const TrackerConfig& cfg) {
  State s;
  const Eigen::Index n = model.state_dim();
  s.x = Eigen::VectorXd::Zero(n);
  s.x.head(2) = m.z;
  s.P = Eigen::MatrixXd::Identity(n, n) * cfg.init_velocity_var;
  s.P.topLeftCorner(2, 2) = model.R;
  return s;
}

void trim_trailing_misses(KalmanTrack& t) {
  while (!t.history.empty() && !t.history.back().measurement) t.history.pop_back();
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

nlohmann::json state_json(const State& s) {
  return {{"x", std::vector<double>(s.x.data(), s.x.data() + s.x.size())}, {"P", matrix_json(s.P)}};
}

State json_state(const nlohmann::json& j) {
  State s;
  const auto x = j.at("x").get<std::vector<double>>();
  s.x = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  s.P = json_matrix(j.at("P"));
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

}  // namespace

Association associate(std::span<const Eigen::Vector2d> predicted, std::span<const Measurement> detections,
                      double gate_m) {
  struct Pair {
    double d;
    std::size_t t;
    std::size_t k;
  };
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    for (std::size_t k = 0; k < detections.size(); ++k) {
      const double d = (predicted[t] - detections[k].z).norm();
      if (d <= gate_m) pairs.push_back({d, t, k});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });
  std::vector<bool> track_used(predicted.size(), false);
  std::vector<bool> det_used(detections.size(), false);
  Association out;
  for (const auto& p : pairs) {
    if (track_used[p.t] || det_used[p.k]) continue;
    track_used[p.t] = true;
    det_used[p.k] = true;
    out.matches.emplace_back(p.t, p.k);
  }
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    if (!track_used[t]) out.unmatched_tracks.push_back(t);
  }
  for (std::size_t k = 0; k < detections.size(); ++k) {
    if (!det_used[k]) out.unmatched_detections.push_back(k);
  }
  return out;
}

Association associate(std::span<const KalmanTrack> tracks, std::span<const Measurement> detections, double gate_m) {
  std::vector<Eigen::Vector2d> predicted;
  predicted.reserve(tracks.size());
  for (const auto& t : tracks) {
    if (t.history.empty()) fail(ErrorKind::InvalidArgument, "associate: track without history");
    predicted.emplace_back(t.history.back().predicted.x.head<2>());
  }
  return associate(predicted, detections, gate_m);
}

std::vector<KalmanTrack> run_tracker(std::vector<Measurement> detections, const Model& model,
                                     const TrackerConfig& cfg) {
  model.validate();
  if (model.measurement_dim() != 2 || model.state_dim() < 2) {
    fail(ErrorKind::InvalidArgument, "tracker expects a planar position measurement model");
  }
  if (cfg.confirm_hits < 1 || cfg.max_misses < 0 || !(cfg.gate_m > 0.0)) {
    fail(ErrorKind::InvalidArgument, "invalid tracker configuration");
  }
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Measurement& a, const Measurement& b) { return a.frame < b.frame; });
  std::vector<KalmanTrack> finished;
  if (detections.empty()) return finished;

  std::vector<KalmanTrack> live;
  int next_id = 1;
  std::size_t cursor = 0;
  const int first = detections.front().frame;
  const int last = detections.back().frame;
  for (int frame = first; frame <= last; ++frame) {
    std::vector<Measurement> dets;
    while (cursor < detections.size() && detections[cursor].frame == frame) dets.push_back(detections[cursor++]);

    std::vector<Eigen::Vector2d> predicted;
    std::vector<State> priors;
    for (const auto& t : live) {
      priors.push_back(kf_predict(t.history.back().filtered, model));
      predicted.emplace_back(priors.back().x.head<2>());
    }
    const Association a = associate(predicted, dets, cfg.gate_m);

    for (const auto& [ti, di] : a.matches) {
      KalmanTrack& t = live[ti];
      TrackEntry e{frame, kf_update(priors[ti], model, position(dets[di])), priors[ti], dets[di]};
      t.history.push_back(std::move(e));
      ++t.hits;
      t.misses = 0;
      if (t.status == TrackStatus::Tentative && t.hits >= cfg.confirm_hits) {
        t.status = TrackStatus::Confirmed;
        t.was_confirmed = true;
      }
    }
    for (std::size_t ti : a.unmatched_tracks) {
      KalmanTrack& t = live[ti];
      ++t.misses;
      if (t.status == TrackStatus::Tentative || t.misses > cfg.max_misses) {
        t.status = TrackStatus::Dead;
      } else {
        t.history.push_back({frame, priors[ti], priors[ti], std::nullopt});
      }
    }
    for (std::size_t di : a.unmatched_detections) {
      KalmanTrack t;
      t.track_id = next_id++;
      t.hits = 1;
      const State s0 = spawn_state(dets[di], model, cfg);
      t.history.push_back({frame, s0, s0, dets[di]});
      if (cfg.confirm_hits <= 1) {
        t.status = TrackStatus::Confirmed;
        t.was_confirmed = true;
      }
      live.push_back(std::move(t));
    }

    for (auto it = live.begin(); it != live.end();) {
      if (it->status == TrackStatus::Dead) {
        trim_trailing_misses(*it);
        finished.push_back(std::move(*it));
        it = live.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& t : live) {
    trim_trailing_misses(t);
    finished.push_back(std::move(t));
  }
  std::sort(finished.begin(), finished.end(),
            [](const KalmanTrack& a, const KalmanTrack& b) { return a.track_id < b.track_id; });
  return finished;
}

std::vector<State> rts_smooth(const KalmanTrack& track, const Model& model) {
  if (track.history.size() < 2) fail(ErrorKind::InvalidInput, "track too short to smooth");
  std::vector<State> filtered;
  std::vector<State> predicted;
  filtered.reserve(track.history.size());
  predicted.reserve(track.history.size());
  for (std::size_t k = 0; k < track.history.size(); ++k) {
    const auto& e = track.history[k];
    if (k > 0 && e.frame != track.history[k - 1].frame + 1) {
      fail(ErrorKind::InvalidInput, "track history has a frame gap");
    }
    filtered.push_back(e.filtered);
    predicted.push_back(e.predicted);
  }
  return rts_backward(filtered, predicted, model);
}

std::vector<TrajectoryRow> trajectory_rows(const KalmanTrack& track, const std::vector<State>& states,
                                           const RoadFrame* rf) {
  if (states.size() != track.history.size()) fail(ErrorKind::InvalidArgument, "state/history length mismatch");
  double length = 4.5;
  double width = 1.8;
  int n = 0;
  double ls = 0.0;
  double ws = 0.0;
  for (const auto& e : track.history) {
    if (!e.measurement) continue;
    ls += e.measurement->length;
    ws += e.measurement->width;
    ++n;
  }
  if (n > 0) {
    length = ls / n;
    width = ws / n;
  }
  std::vector<TrajectoryRow> rows;
  rows.reserve(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto& x = states[k].x;
    TrajectoryRow row;
    row.record.track_id = track.track_id;
    row.record.frame = track.history[k].frame;
    row.record.road_pos.x = x(0);
    row.record.road_pos.y = x(1);
    if (rf != nullptr) {
      const LaneSection ls_id = assign_lane_section(x(0), x(1), *rf);
      row.record.road_pos.section_id = ls_id.section_id;
      row.record.road_pos.lane_id = ls_id.lane_id;
      row.record.road_pos.off_road = ls_id.off_road;
    }
    row.record.length = length;
    row.record.width = width;
    if (x.size() >= 4) {
      row.vx = x(2);
      row.vy = x(3);
      row.heading_rad = std::atan2(x(3), x(2));
    }
    rows.push_back(row);
  }
  return rows;
}

// ---- file formats ----------------------------------------------------------

std::vector<Measurement> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<Measurement> out;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("provenance")) continue;
      Measurement m;
      m.frame = j.at("frame").get<int>();
      m.z = Eigen::Vector2d(j.at("x_m").get<double>(), j.at("y_m").get<double>());
      m.length = j.value("length_m", 4.5);
      m.width = j.value("width_m", 1.8);
      m.score = j.value("score", 1.0);
      m.source_index = row++;
      out.push_back(m);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Io, "detections " + path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_detections(const std::filesystem::path& path, std::span<const Measurement> dets,
                      const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  if (!header_comments.empty()) out << nlohmann::json{{"provenance", header_comments}}.dump() << "\n";
  for (const auto& d : dets) {
    out << nlohmann::json{{"frame", d.frame},       {"x_m", d.z.x()},       {"y_m", d.z.y()},
                          {"length_m", d.length}, {"width_m", d.width}, {"score", d.score}}
               .dump()
        << "\n";
  }
}

void write_tracks(const std::filesystem::path& path, std::span<const KalmanTrack> tracks,
                  const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  if (!header_comments.empty()) out << nlohmann::json{{"provenance", header_comments}}.dump() << "\n";
  for (const auto& t : tracks) {
    nlohmann::json j;
    j["track_id"] = t.track_id;
    j["status"] = t.status == TrackStatus::Tentative ? "tentative" : t.status == TrackStatus::Confirmed ? "confirmed" : "dead";
    j["was_confirmed"] = t.was_confirmed;
    j["hits"] = t.hits;
    j["misses"] = t.misses;
    j["history"] = nlohmann::json::array();
    for (const auto& e : t.history) {
      nlohmann::json je{{"frame", e.frame}, {"filtered", state_json(e.filtered)}, {"predicted", state_json(e.predicted)}};
      if (e.measurement) {
        je["measurement"] = {{"x_m", e.measurement->z.x()},         {"y_m", e.measurement->z.y()},
                             {"length_m", e.measurement->length}, {"width_m", e.measurement->width},
                             {"score", e.measurement->score},     {"source_index", e.measurement->source_index}};
      } else {
        je["measurement"] = nullptr;
      }
      j["history"].push_back(je);
    }
    out << j.dump() << "\n";
  }
}

std::vector<KalmanTrack> read_tracks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<KalmanTrack> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("provenance")) continue;
      KalmanTrack t;
      t.track_id = j.at("track_id").get<int>();
      const auto status = j.at("status").get<std::string>();
      t.status = status == "tentative" ? TrackStatus::Tentative
                 : status == "confirmed" ? TrackStatus::Confirmed
                                         : TrackStatus::Dead;
      t.was_confirmed = j.value("was_confirmed", t.status == TrackStatus::Confirmed);
      t.hits = j.value("hits", 0);
      t.misses = j.value("misses", 0);
      for (const auto& je : j.at("history")) {
        TrackEntry e;
        e.frame = je.at("frame").get<int>();
        e.filtered = json_state(je.at("filtered"));
        e.predicted = json_state(je.at("predicted"));
        if (je.contains("measurement") && !je["measurement"].is_null()) {
          const auto& jm = je["measurement"];
          Measurement m;
          m.frame = e.frame;
          m.z = Eigen::Vector2d(jm.at("x_m").get<double>(), jm.at("y_m").get<double>());
          m.length = jm.value("length_m", 4.5);
          m.width = jm.value("width_m", 1.8);
          m.score = jm.value("score", 1.0);
          m.source_index = jm.value("source_index", -1);
          e.measurement = m;
        }
        t.history.push_back(std::move(e));
      }
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Io, "tracks " + path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_trajectories(const std::filesystem::path& path, std::span<const TrajectoryRow> rows,
                        const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "track_id,frame,x_m,y_m,section_id,lane_id,length_m,width_m,vx,vy,heading_rad\n" << std::setprecision(12);
  for (const auto& row : rows) {
    const auto& r = row.record;
    out << r.track_id << "," << r.frame << "," << r.road_pos.x << "," << r.road_pos.y << "," << r.road_pos.section_id
        << "," << r.road_pos.lane_id << "," << r.length << "," << r.width << "," << row.vx << "," << row.vy << ","
        << row.heading_rad << "\n";
  }
}

std::vector<TrajectoryRow> read_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<TrajectoryRow> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() < 11) fail(ErrorKind::Io, "trajectories: short row in " + path.string());
    TrajectoryRow row;
    row.record.track_id = std::stoi(cells[0]);
    row.record.frame = std::stoi(cells[1]);
    row.record.road_pos.x = std::stod(cells[2]);
    row.record.road_pos.y = std::stod(cells[3]);
    row.record.road_pos.section_id = std::stoi(cells[4]);
    row.record.road_pos.lane_id = std::stoi(cells[5]);
    row.record.length = std::stod(cells[6]);
    row.record.width = std::stod(cells[7]);
    row.vx = std::stod(cells[8]);
    row.vy = std::stod(cells[9]);
    row.heading_rad = std::stod(cells[10]);
    out.push_back(row);
  }
  return out;
}

}  // namespace urbanflow
