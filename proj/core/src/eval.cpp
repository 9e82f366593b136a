#include "flythrough/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace flythrough {

namespace {

void check_same_shape(const RgbdImage& a, const RgbdImage& b, const Mask* mask, const char* what) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument(std::string(what) + ": shape mismatch");
  if (mask && (mask->width() != a.width || mask->height() != a.height))
    throw std::invalid_argument(std::string(what) + ": mask shape mismatch");
}

std::vector<double> grayscale(const RgbdImage& img) {
  std::vector<double> g(img.pixel_count());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = (static_cast<double>(img.at(i, 0)) + img.at(i, 1) + img.at(i, 2)) / 3.0;
  return g;
}

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int k = 0; k < kSsimWindow; ++k) {
    const double d = k - kSsimWindow / 2;
    w[k] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[k];
  }
  for (auto& v : w) v /= sum;
  return w;
}

/// Separable Gaussian filter with replicate padding.
std::vector<double> blur(const std::vector<double>& src, int width, int height) {
  static const auto taps = gaussian_taps();
  const int r = kSsimWindow / 2;
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += taps[k + r] * src[y * width + std::clamp(x + k, 0, width - 1)];
      tmp[y * width + x] = acc;
    }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += taps[k + r] * tmp[std::clamp(y + k, 0, height - 1) * width + x];
      out[y * width + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const RgbdImage& a, const RgbdImage& b, const Mask* mask) {
  check_same_shape(a, b, mask, "psnr");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    if (mask && !(*mask)[i]) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(a.at(i, c)) - b.at(i, c);
      sum += d * d;
    }
    count += 3;
  }
  if (count == 0) throw MetricError("psnr: empty mask");
  const double mse = sum / static_cast<double>(count);
  if (mse < 1e-10) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

std::vector<double> ssim_map(const RgbdImage& a, const RgbdImage& b) {
  check_same_shape(a, b, nullptr, "ssim");
  if (a.width < kSsimWindow || a.height < kSsimWindow)
    throw std::invalid_argument("ssim: image smaller than the 7x7 window");
  const int w = a.width;
  const int h = a.height;
  const auto ga = grayscale(a);
  const auto gb = grayscale(b);
  std::vector<double> aa(ga.size()), bb(ga.size()), ab(ga.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    aa[i] = ga[i] * ga[i];
    bb[i] = gb[i] * gb[i];
    ab[i] = ga[i] * gb[i];
  }
  const auto mu_a = blur(ga, w, h);
  const auto mu_b = blur(gb, w, h);
  const auto e_aa = blur(aa, w, h);
  const auto e_bb = blur(bb, w, h);
  const auto e_ab = blur(ab, w, h);
  const double c1 = kSsimK1 * kSsimK1;
  const double c2 = kSsimK2 * kSsimK2;
  std::vector<double> out(ga.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
    out[i] = std::clamp(num / den, -1.0, 1.0);
  }
  return out;
}

double ssim(const RgbdImage& a, const RgbdImage& b, const Mask* mask) {
  check_same_shape(a, b, mask, "ssim");
  const auto map = ssim_map(a, b);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    sum += map[i];
    ++count;
  }
  if (count == 0) throw MetricError("ssim: empty mask");
  return sum / static_cast<double>(count);
}

ConsistencyReport reprojection_consistency(const std::vector<RgbdImage>& frames, const std::vector<CameraPose>& poses,
                                           const Intrinsics& K, int stride) {
  if (frames.size() != poses.size()) throw std::invalid_argument("reprojection_consistency: frame/pose count mismatch");
  if (frames.size() < 2) throw std::invalid_argument("reprojection_consistency: need at least two frames");
  if (stride < 1) throw std::invalid_argument("reprojection_consistency: stride must be >= 1");
  ConsistencyReport report;
  double sum = 0.0;
  for (std::size_t i = 0; i + static_cast<std::size_t>(stride) < frames.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stride);
    const MeshProjection warp = warp_rgbd(frames[i], poses[i], poses[j], K);
    const Mask region = warp.clean_valid();
    const double overlap = region.fraction();
    if (overlap < kMinOverlap) {
      report.skipped.push_back({static_cast<int>(i), static_cast<int>(j), overlap});
      continue;
    }
    PairScore score{static_cast<int>(i), static_cast<int>(j), psnr(warp.image, frames[j], &region),
                    ssim(warp.image, frames[j], &region), overlap};
    sum += score.masked_psnr_db;
    report.per_pair.push_back(score);
  }
  if (!report.per_pair.empty()) report.mean_adjacent_psnr_db = sum / static_cast<double>(report.per_pair.size());
  return report;
}

double mesh_alignment_score(const RgbdImage& input, const CameraPose& input_pose, const RgbdImage& final_frame,
                            const CameraPose& final_pose, const Intrinsics& K) {
  const MeshProjection warp = warp_rgbd(input, input_pose, final_pose, K);
  const Mask region = warp.clean_valid();
  if (!region.any()) throw MetricError("mesh_alignment_score: input does not overlap the final view");
  return psnr(warp.image, final_frame, &region);
}

}  // namespace flythrough
