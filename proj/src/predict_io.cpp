#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "urbanflow/error.hpp"
#include "urbanflow/predict.hpp"

namespace urbanflow {
namespace {

using nlohmann::json;

const std::vector<std::string> kStepFields = {"ego_x_m",      "ego_y_m",     "ego_vx",     "ego_vy",
                                              "ego_heading",  "ego_dist_m",  "target_x_m", "target_y_m",
                                              "target_vx",    "target_vy",   "target_heading", "target_dist_m",
                                              "target_dist_to_entry_m"};

std::string arm_name(Arm a) {
  static const char* names[] = {"south", "east", "north", "west"};
  return names[static_cast<int>(a)];
}

Arm arm_from_name(const std::string& s) {
  for (int i = 0; i < 4; ++i) {
    if (arm_name(static_cast<Arm>(i)) == s) return static_cast<Arm>(i);
  }
  fail(ErrorKind::Io, "unknown arm '" + s + "'");
}

void write_doubles(std::ostream& out, const nn::Vec<double>& v) {
  static_assert(std::endian::native == std::endian::little, "model files are little-endian");
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, nn::Vec<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(v.size() * sizeof(double))) {
    fail(ErrorKind::Io, "model file is truncated");
  }
}

json read_header(std::ifstream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Io, "empty model file " + path.string());
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, "model header in " + path.string() + ": " + e.what());
  }
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream ss;
  ss << std::setprecision(10) << *v;
  return ss.str();
}

}  // namespace

void write_pairs(const std::filesystem::path& path, const std::vector<PairSample>& pairs,
                 const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  json header{{"step_fields", kStepFields}};
  if (!header_comments.empty()) header["provenance"] = header_comments;
  out << header.dump() << "\n";
  for (const auto& p : pairs) {
    json j;
    j["pair_id"] = p.pair_id;
    j["dt_s"] = p.dt;
    j["target_arm"] = arm_name(p.target_arm);
    j["ego_arm"] = arm_name(p.ego_arm);
    j["direction_label"] = std::string(to_string(p.direction));
    j["ego_direction"] = std::string(to_string(p.ego_direction));
    j["yield_label"] = std::string(to_string(p.yield));
    json steps = json::array();
    for (const auto& s : p.steps) {
      json row = json::array();
      for (int k = 0; k < kPairFeatures; ++k) row.push_back(s.features(k));
      row.push_back(s.target_dist_to_entry);
      steps.push_back(std::move(row));
    }
    j["steps"] = std::move(steps);
    json fut = json::array();
    for (const auto& f : p.future_target_xy) fut.push_back({f.x(), f.y()});
    j["future_target_xy"] = std::move(fut);
    out << j.dump() << "\n";
  }
}

std::vector<PairSample> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<PairSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (j.contains("step_fields") || j.contains("provenance")) continue;
      PairSample p;
      p.pair_id = j.at("pair_id").get<int>();
      p.dt = j.at("dt_s").get<double>();
      p.target_arm = arm_from_name(j.value("target_arm", std::string("north")));
      p.ego_arm = arm_from_name(j.value("ego_arm", std::string("south")));
      p.direction = direction_from_string(j.at("direction_label").get<std::string>());
      p.ego_direction = direction_from_string(j.value("ego_direction", std::string("TL")));
      p.yield = yield_from_string(j.at("yield_label").get<std::string>());
      for (const auto& row : j.at("steps")) {
        if (row.size() != kStepFields.size()) fail(ErrorKind::Io, "pairs: step row has wrong length");
        PairStep s;
        for (int k = 0; k < kPairFeatures; ++k) s.features(k) = row.at(static_cast<std::size_t>(k)).get<double>();
        s.target_dist_to_entry = row.at(kPairFeatures).get<double>();
        p.steps.push_back(s);
      }
      for (const auto& f : j.at("future_target_xy")) p.future_target_xy.emplace_back(f.at(0).get<double>(), f.at(1).get<double>());
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      fail(ErrorKind::Io, "pairs " + path.string() + ": " + e.what());
    }
  }
  return out;
}

void save_model(const std::filesystem::path& path, const IntentionModel& model,
                const std::vector<std::string>& header_comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  json h{{"kind", "intention"},
         {"input", kPairFeatures},
         {"hidden", model.hidden},
         {"seed", model.seed},
         {"count", model.params.size()}};
  if (!header_comments.empty()) h["provenance"] = header_comments;
  out << h.dump() << "\n";
  write_doubles(out, model.params);
}

void save_model(const std::filesystem::path& path, const TrajectoryModel& model,
                const std::vector<std::string>& header_comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  json h{{"kind", "trajectory"},
         {"mode", std::string(to_string(model.mode))},
         {"input", trajectory_input_size(model.mode)},
         {"hidden", model.hidden},
         {"window", model.window},
         {"horizon", model.horizon},
         {"seed", model.seed},
         {"count", model.params.size()}};
  if (!header_comments.empty()) h["provenance"] = header_comments;
  out << h.dump() << "\n";
  write_doubles(out, model.params);
}

IntentionModel load_intention_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  const json h = read_header(in, path);
  if (h.value("kind", std::string()) != "intention") fail(ErrorKind::Io, path.string() + " is not an intention model");
  IntentionModel m = IntentionModel::create(h.at("hidden").get<int>(), h.at("seed").get<std::uint64_t>());
  if (h.at("count").get<Eigen::Index>() != m.params.size()) fail(ErrorKind::Io, "intention model size mismatch");
  read_doubles(in, m.params);
  return m;
}

TrajectoryModel load_trajectory_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  const json h = read_header(in, path);
  if (h.value("kind", std::string()) != "trajectory") fail(ErrorKind::Io, path.string() + " is not a trajectory model");
  TrajectoryModel m = TrajectoryModel::create(trajectory_mode_from_string(h.at("mode").get<std::string>()),
                                              h.at("window").get<int>(), h.at("horizon").get<int>(),
                                              h.at("hidden").get<int>(), h.at("seed").get<std::uint64_t>());
  if (h.at("count").get<Eigen::Index>() != m.params.size()) fail(ErrorKind::Io, "trajectory model size mismatch");
  read_doubles(in, m.params);
  return m;
}

void write_bin_metrics(const std::filesystem::path& path, const Evaluation& eval,
                       const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "bin_lo_m,bin_hi_m,steps,direction_accuracy,yield_accuracy,trajectories,trajectory_mse_m2\n";
  for (const auto& b : eval.bins) {
    out << b.lo << "," << b.hi << "," << b.steps << "," << fmt(b.direction_accuracy) << "," << fmt(b.yield_accuracy)
        << "," << b.trajectories << "," << fmt(b.trajectory_mse) << "\n";
  }
}

void write_summary(const std::filesystem::path& path, const std::vector<std::string>& names,
                   const std::vector<Evaluation>& evals, const std::vector<std::string>& header_comments) {
  if (names.size() != evals.size()) fail(ErrorKind::InvalidArgument, "summary: names/evaluations mismatch");
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "model,direction_accuracy,yield_accuracy,trajectories,trajectory_mse_m2\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << names[i] << "," << fmt(evals[i].direction_accuracy) << "," << fmt(evals[i].yield_accuracy) << ","
        << evals[i].trajectories << "," << fmt(evals[i].trajectory_mse) << "\n";
  }
}

}  // namespace urbanflow
