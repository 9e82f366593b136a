#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "flythrough/geometry.hpp"
#include "flythrough/image.hpp"

namespace flythrough {

/// Raised when a metric has no pixels to average over.
class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPsnrCapDb = 99.0;
inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kMinOverlap = 0.05;

/// PSNR over the RGB channels of masked pixels, dynamic range 1.
double psnr(const RgbdImage& a, const RgbdImage& b, const Mask* mask = nullptr);

/// Per-pixel SSIM of the grayscale (RGB mean) images; replicate padding.
std::vector<double> ssim_map(const RgbdImage& a, const RgbdImage& b);
/// Mean of ssim_map over masked pixels.
double ssim(const RgbdImage& a, const RgbdImage& b, const Mask* mask = nullptr);

struct PairScore {
  int i = 0;
  int j = 0;
  double masked_psnr_db = 0.0;
  double masked_ssim = 0.0;
  double overlap_fraction = 0.0;
};

struct SkippedPair {
  int i = 0;
  int j = 0;
  double overlap_fraction = 0.0;
};

struct ConsistencyReport {
  std::vector<PairScore> per_pair;
  std::vector<SkippedPair> skipped;
  /// Mean PSNR over scored pairs; empty when every pair was skipped.
  std::optional<double> mean_adjacent_psnr_db;
  std::optional<double> mesh_alignment_psnr_db;
};

ConsistencyReport reprojection_consistency(const std::vector<RgbdImage>& frames, const std::vector<CameraPose>& poses,
                                           const Intrinsics& K, int stride = 1);

/// PSNR between the input warped into the final view and the final frame,
/// over the warp's clean-valid region.
double mesh_alignment_score(const RgbdImage& input, const CameraPose& input_pose, const RgbdImage& final_frame,
                            const CameraPose& final_pose, const Intrinsics& K);

}  // namespace flythrough
