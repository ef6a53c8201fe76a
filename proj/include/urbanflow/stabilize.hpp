#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "urbanflow/imaging.hpp"

namespace urbanflow {

struct Correspondence {
  Eigen::Vector2d p_ref;
  Eigen::Vector2d p_tgt;
};

struct StabilizerConfig {
  double ssim_threshold = 0.70;
  int ecc_max_iters = 50;
  double ecc_eps = 1e-5;
  int ds_factor = 8;
  int ransac_iters = 2000;
  double ransac_inlier_px = 2.0;
  // Not part of the published controller, but needed for reproducible runs.
  std::uint64_t ransac_seed = 0x5eed;
  double max_match_displacement_px = 48.0;
  bool ecc_presmooth = true;

  void validate() const;
};

struct Keypoint {
  Eigen::Vector2d pos;
  double response = 0.0;
};

struct MatchOptions {
  int max_keypoints = 500;
  int patch_size = 11;
  double min_ncc = 0.8;
  double max_displacement = std::numeric_limits<double>::infinity();
};

/// Minimum-eigenvalue structure-tensor corners with 7x7 non-max suppression and
/// quadratic sub-pixel refinement. Keypoints whose patch would touch an invalid
/// pixel (when `valid` is given) or the image border are dropped.
std::vector<Keypoint> detect_corners(const ImageBuffer& img, int max_count, int border,
                                     const Mask* valid = nullptr);

/// Mutual-best NCC matching of corner patches. Throws InsufficientFeatures when
/// fewer than four matches survive.
std::vector<Correspondence> detect_and_match(const ImageBuffer& ref, const ImageBuffer& tgt,
                                             const MatchOptions& opts = {});
std::vector<Correspondence> detect_and_match(const ImageBuffer& ref, const ImageBuffer& tgt,
                                             const Mask& tgt_valid, const MatchOptions& opts = {});

/// Normalized DLT; the result maps target points onto reference points.
Homography dlt_homography(std::span<const Correspondence> matches);

/// RMS of forward and backward transfer distances.
double symmetric_transfer_error(const Homography& h, const Correspondence& m);

struct RansacResult {
  Homography h;
  std::vector<std::size_t> inliers;
};

RansacResult ransac_homography(std::span<const Correspondence> matches, const StabilizerConfig& cfg);

struct EccResult {
  Homography h;  // maps target pixels onto reference pixels
  double score = 0.0;
  int iterations = 0;
  bool diverged = false;
};

/// Maximizes the correlation between the zero-mean reference and the warped
/// target over the 8 homography parameters (forwards-additive updates).
EccResult ecc_refine(const ImageBuffer& ref, const ImageBuffer& tgt, const Homography& h_init,
                     const StabilizerConfig& cfg);

/// Correlation of zero-mean reference against the target warped by `h`.
double ecc_correlation(const ImageBuffer& ref, const ImageBuffer& tgt, const Homography& h);

struct FrameResult {
  int frame_index = 0;
  Homography h = Homography::Identity();  // frame -> frame 0
  double ssim_score = 1.0;                // warped frame vs current reference
  double unwarped_score = 1.0;            // raw frame vs current reference
  double ecc_score = std::numeric_limits<double>::quiet_NaN();
  bool aligned = false;
  bool failed = false;
  int ref_index = 0;
  double align_seconds = 0.0;
};

struct StabilizerSnapshot {
  int ref_index = 0;
  Homography current_h = Homography::Identity();
  double last_score = 1.0;
  int alignment_count = 0;
};

struct StabilizerState {
  ImageBuffer ref_frame;
  int ref_index = 0;
  Homography current_h = Homography::Identity();  // frame -> current reference
  double last_score = 1.0;
  int alignment_count = 0;

  StabilizerSnapshot snapshot() const {
    return {ref_index, current_h, last_score, alignment_count};
  }
};

struct StreamResult {
  std::vector<FrameResult> frames;
  std::vector<StabilizerSnapshot> trace;
  StabilizerState final_state;
};

/// Incremental form of stabilize_stream, for callers that load frames lazily.
class Stabilizer {
 public:
  explicit Stabilizer(StabilizerConfig cfg);

  FrameResult push(const ImageBuffer& frame);
  const StabilizerState& state() const { return state_; }
  int frames_seen() const { return frames_seen_; }

 private:
  void promote(const ImageBuffer& frame, int index);

  StabilizerConfig cfg_;
  StabilizerState state_;
  ImageBuffer ref_ds_;
  Homography ref_abs_ = Homography::Identity();  // current reference -> frame 0
  int frames_seen_ = 0;
};

StreamResult stabilize_stream(std::span<const ImageBuffer> frames, const StabilizerConfig& cfg);

// ---- file formats ----------------------------------------------------------

void write_homography_log(const std::filesystem::path& path, std::span<const FrameResult> frames,
                          const std::vector<std::string>& header_comments = {});
std::vector<FrameResult> read_homography_log(const std::filesystem::path& path);

/// Sorted numbered .pgm files of a directory.
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir);

// Raw stream: 8-byte magic "UFRAW001", uint32 LE width, height, count, then
// count*width*height 8-bit pixels.
void write_raw_stream(const std::filesystem::path& path, std::span<const ImageBuffer> frames);
std::vector<ImageBuffer> read_raw_stream(const std::filesystem::path& path);

}  // namespace urbanflow
