#include "urbanflow/stabilize.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace urbanflow {

void StabilizerConfig::validate() const {
  if (!(ssim_threshold > 0.0 && ssim_threshold < 1.0)) {
    fail(ErrorKind::InvalidArgument, "ssim_threshold must lie in (0,1)");
  }
  if (ecc_max_iters < 1 || ransac_iters < 1) fail(ErrorKind::InvalidArgument, "iteration counts must be >= 1");
  if (!(ecc_eps > 0.0)) fail(ErrorKind::InvalidArgument, "ecc_eps must be positive");
  if (ds_factor != 1 && ds_factor != 2 && ds_factor != 4 && ds_factor != 8) {
    fail(ErrorKind::InvalidArgument, "ds_factor must be 1, 2, 4 or 8");
  }
  if (!(ransac_inlier_px > 0.0)) fail(ErrorKind::InvalidArgument, "ransac_inlier_px must be positive");
}

Stabilizer::Stabilizer(StabilizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Stabilizer::promote(const ImageBuffer& frame, int index) {
  state_.ref_frame = frame;
  state_.ref_index = index;
  state_.current_h = Homography::Identity();
  ref_ds_ = downsample(frame, cfg_.ds_factor);
}

FrameResult Stabilizer::push(const ImageBuffer& frame) {
  const int index = frames_seen_++;
  FrameResult out;
  out.frame_index = index;
  if (index == 0) {
    promote(frame, 0);
    ref_abs_ = Homography::Identity();
    out.ref_index = 0;
    state_.last_score = 1.0;
    return out;
  }
  if (frame.rows() != state_.ref_frame.rows() || frame.cols() != state_.ref_frame.cols()) {
    fail(ErrorKind::InvalidArgument, "frame dimensions change within the stream");
  }
  const int width = static_cast<int>(frame.cols());
  const int height = static_cast<int>(frame.rows());

  auto score_of = [&](const Homography& h) {
    const WarpResult w = warp(frame, h, width, height);
    return ssim(w.image, state_.ref_frame, w.valid);
  };

  out.unwarped_score = ssim(frame, state_.ref_frame);
  double score = score_of(state_.current_h);
  out.ref_index = state_.ref_index;

  if (score >= cfg_.ssim_threshold && score >= out.unwarped_score) {
    out.ssim_score = score;
    out.h = normalize_homography(ref_abs_ * state_.current_h);
    state_.last_score = score;
    return out;
  }

  ++state_.alignment_count;
  out.aligned = true;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    // Rough alignment of the frame (pre-warped with the previous estimate) to
    // the reference, then ECC on down-sampled images warm-started from it.
    Homography init = state_.current_h;
    try {
      const WarpResult pre = warp(frame, state_.current_h, width, height);
      MatchOptions mopts;
      mopts.max_displacement = cfg_.max_match_displacement_px;
      const auto matches = detect_and_match(state_.ref_frame, pre.image, pre.valid, mopts);
      const RansacResult rough = ransac_homography(matches, cfg_);
      init = normalize_homography(rough.h * state_.current_h);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InsufficientFeatures && e.kind() != ErrorKind::EstimationFailed) throw;
    }
    const ImageBuffer frame_ds = downsample(frame, cfg_.ds_factor);
    const EccResult ecc = ecc_refine(ref_ds_, frame_ds, downscale_homography(init, cfg_.ds_factor), cfg_);
    out.ecc_score = ecc.score;
    const Homography refined = upscale_homography(ecc.h, cfg_.ds_factor);

    // Keep whichever candidate scores best against the reference.
    Homography chosen = state_.current_h;
    double chosen_score = score;
    for (const Homography& candidate : {refined, init}) {
      if (!is_invertible(candidate)) continue;
      const double s = score_of(candidate);
      if (s > chosen_score) {
        chosen_score = s;
        chosen = candidate;
      }
    }
    if (out.unwarped_score > chosen_score) {
      chosen = Homography::Identity();
      chosen_score = out.unwarped_score;
    }
    state_.current_h = chosen;
    score = chosen_score;
  } catch (const Error&) {
    out.failed = true;
  }
  out.align_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  out.ssim_score = score;
  out.h = normalize_homography(ref_abs_ * state_.current_h);
  state_.last_score = score;
  if (!out.failed && score < cfg_.ssim_threshold) {
    // Chain: frame -> old reference -> frame 0 becomes the new reference's map.
    ref_abs_ = out.h;
    promote(frame, index);
  }
  return out;
}

StreamResult stabilize_stream(std::span<const ImageBuffer> frames, const StabilizerConfig& cfg) {
  if (frames.empty()) fail(ErrorKind::InvalidArgument, "stabilize_stream: no frames");
  Stabilizer stab(cfg);
  StreamResult result;
  result.frames.reserve(frames.size());
  result.trace.reserve(frames.size());
  for (const auto& f : frames) {
    result.frames.push_back(stab.push(f));
    result.trace.push_back(stab.state().snapshot());
  }
  result.final_state = stab.state();
  return result;
}

// ---- file formats ----------------------------------------------------------

void write_homography_log(const std::filesystem::path& path, std::span<const FrameResult> frames,
                          const std::vector<std::string>& header_comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << "\n";
  out << "frame_index,h00,h01,h02,h10,h11,h12,h20,h21,ssim_score,aligned_flag,ref_index,ecc_score,failed_flag\n";
  out << std::setprecision(17);
  for (const auto& f : frames) {
    out << f.frame_index;
    for (int k = 0; k < 8; ++k) out << "," << f.h(k / 3, k % 3);
    out << "," << f.ssim_score << "," << (f.aligned ? 1 : 0) << "," << f.ref_index << ",";
    if (std::isnan(f.ecc_score)) {
      out << "nan";
    } else {
      out << f.ecc_score;
    }
    out << "," << (f.failed ? 1 : 0) << "\n";
  }
}

std::vector<FrameResult> read_homography_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<FrameResult> out;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 12) fail(ErrorKind::Io, "homography log: short row in " + path.string());
    FrameResult f;
    f.frame_index = std::stoi(cells[0]);
    for (int k = 0; k < 8; ++k) f.h(k / 3, k % 3) = std::stod(cells[static_cast<std::size_t>(1 + k)]);
    f.h(2, 2) = 1.0;
    f.ssim_score = std::stod(cells[9]);
    f.aligned = cells[10] == "1";
    f.ref_index = std::stoi(cells[11]);
    if (cells.size() >= 14) {
      f.ecc_score = cells[12] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[12]);
      f.failed = cells[13] == "1";
    }
    out.push_back(f);
  }
  return out;
}

std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::Io, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

namespace {
constexpr char kRawMagic[8] = {'U', 'F', 'R', 'A', 'W', '0', '0', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4] = {};
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) fail(ErrorKind::Io, "raw stream: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void write_raw_stream(const std::filesystem::path& path, std::span<const ImageBuffer> frames) {
  if (frames.empty()) fail(ErrorKind::InvalidArgument, "raw stream: no frames");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(kRawMagic, 8);
  const auto w = static_cast<std::uint32_t>(frames.front().cols());
  const auto h = static_cast<std::uint32_t>(frames.front().rows());
  put_u32(out, w);
  put_u32(out, h);
  put_u32(out, static_cast<std::uint32_t>(frames.size()));
  std::string raw(static_cast<std::size_t>(w) * h, '\0');
  for (const auto& f : frames) {
    if (f.cols() != w || f.rows() != h) fail(ErrorKind::InvalidArgument, "raw stream: frame sizes differ");
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      raw[static_cast<std::size_t>(i)] = static_cast<char>(
          static_cast<unsigned char>(std::lround(std::clamp(f.data()[i], 0.0, 1.0) * 255.0)));
    }
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  }
}

std::vector<ImageBuffer> read_raw_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kRawMagic, 8) != 0) fail(ErrorKind::Io, "raw stream: bad magic");
  const std::uint32_t w = get_u32(in);
  const std::uint32_t h = get_u32(in);
  const std::uint32_t count = get_u32(in);
  if (w == 0 || h == 0) fail(ErrorKind::Io, "raw stream: zero dimension");
  std::vector<ImageBuffer> frames;
  frames.reserve(count);
  std::string raw(static_cast<std::size_t>(w) * h, '\0');
  for (std::uint32_t k = 0; k < count; ++k) {
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) fail(ErrorKind::Io, "raw stream: truncated frame");
    ImageBuffer img(h, w);
    for (Eigen::Index i = 0; i < img.size(); ++i) {
      img.data()[i] = static_cast<unsigned char>(raw[static_cast<std::size_t>(i)]) / 255.0;
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

}  // namespace urbanflow
