#include "flythrough/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flythrough {

namespace {

constexpr double kMaxRayDepth = 400.0;

bool is_power_of_two_plus_one(int n) {
  if (n < 3) return false;
  const int m = n - 1;
  return (m & (m - 1)) == 0;
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

Eigen::Vector3d mix(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double t) { return a + (b - a) * t; }

const Eigen::Vector3d kHorizon(0.78, 0.86, 0.95);
const Eigen::Vector3d kZenith(0.32, 0.52, 0.86);

Eigen::Vector3d sky_color(const Eigen::Vector3d& dir) {
  return mix(kHorizon, kZenith, std::clamp(dir.y() * 2.5, 0.0, 1.0));
}

// Smooth per-cell colour jitter in [-1, 1], bilinear over a 1-unit lattice.
double value_noise(double x, double z) {
  const double fx = std::floor(x);
  const double fz = std::floor(z);
  auto lattice = [](double i, double j) {
    const auto h = mix64(static_cast<std::uint64_t>(static_cast<std::int64_t>(i) * 73856093) ^
                         static_cast<std::uint64_t>(static_cast<std::int64_t>(j) * 19349663));
    return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  };
  const double tx = smoothstep(0.0, 1.0, x - fx);
  const double tz = smoothstep(0.0, 1.0, z - fz);
  const double a = lattice(fx, fz) + (lattice(fx + 1, fz) - lattice(fx, fz)) * tx;
  const double b = lattice(fx, fz + 1) + (lattice(fx + 1, fz + 1) - lattice(fx, fz + 1)) * tx;
  return a + (b - a) * tz;
}

Eigen::Vector3d terrain_albedo(double elevation, double slope_up, double x, double z) {
  const Eigen::Vector3d sand(0.76, 0.70, 0.50);
  const Eigen::Vector3d grass(0.30, 0.55, 0.22);
  const Eigen::Vector3d forest(0.18, 0.38, 0.17);
  const Eigen::Vector3d rock(0.47, 0.43, 0.40);
  const Eigen::Vector3d snow(0.95, 0.95, 0.97);
  const double e = elevation / kMaxElevation;
  Eigen::Vector3d c = sand;
  c = mix(c, grass, smoothstep(0.08, 0.16, e));
  c = mix(c, forest, smoothstep(0.40, 0.50, e));
  c = mix(c, rock, smoothstep(0.58, 0.68, e));
  c = mix(c, snow, smoothstep(0.78, 0.86, e));
  c = mix(c, rock, smoothstep(0.88, 0.70, slope_up) * 0.8);
  return c * (1.0 + 0.06 * value_noise(x, z));
}

}  // namespace

bool Heightfield::contains(double x, double z) const {
  const double half = extent() / 2.0;
  return x >= -half && x <= half && z >= -half && z <= half;
}

double Heightfield::elevation(double x, double z) const {
  const double half = extent() / 2.0;
  const double fi = std::clamp((x + half) / horizontal_scale, 0.0, static_cast<double>(size - 1));
  const double fj = std::clamp((z + half) / horizontal_scale, 0.0, static_cast<double>(size - 1));
  const int i0 = std::min(static_cast<int>(fi), size - 2);
  const int j0 = std::min(static_cast<int>(fj), size - 2);
  const double tx = fi - i0;
  const double tz = fj - j0;
  const double a = at(i0, j0) + (at(i0 + 1, j0) - at(i0, j0)) * tx;
  const double b = at(i0, j0 + 1) + (at(i0 + 1, j0 + 1) - at(i0, j0 + 1)) * tx;
  return a + (b - a) * tz;
}

Eigen::Vector3d Heightfield::normal(double x, double z) const {
  const double h = horizontal_scale;
  const double dx = (elevation(x + h, z) - elevation(x - h, z)) / (2.0 * h);
  const double dz = (elevation(x, z + h) - elevation(x, z - h)) / (2.0 * h);
  return Eigen::Vector3d(-dx, 1.0, -dz).normalized();
}

Heightfield generate_heightfield(std::uint64_t seed, int n, double roughness, double horizontal_scale) {
  if (!is_power_of_two_plus_one(n)) throw std::invalid_argument("generate_heightfield: n must be 2^k + 1");
  if (!(roughness >= 0.0)) throw std::invalid_argument("generate_heightfield: roughness must be non-negative");
  if (!(horizontal_scale > 0.0)) throw std::invalid_argument("generate_heightfield: horizontal_scale must be positive");

  Rng rng(seed, "heightfield");
  Heightfield hf;
  hf.size = n;
  hf.horizontal_scale = horizontal_scale;
  hf.elevations.assign(static_cast<std::size_t>(n) * n, 0.0);
  auto g = [&](int i, int j) -> double& { return hf.elevations[static_cast<std::size_t>(j) * n + i]; };

  const int last = n - 1;
  for (auto [i, j] : std::array<std::pair<int, int>, 4>{{{0, 0}, {last, 0}, {0, last}, {last, last}}})
    g(i, j) = rng.uniform(-1.0, 1.0) * roughness;

  double amplitude = roughness;
  for (int step = last; step > 1; step /= 2) {
    const int half = step / 2;
    for (int j = half; j < n; j += step) {
      for (int i = half; i < n; i += step) {
        const double avg = (g(i - half, j - half) + g(i + half, j - half) + g(i - half, j + half) + g(i + half, j + half)) / 4.0;
        g(i, j) = avg + rng.uniform(-1.0, 1.0) * amplitude;
      }
    }
    for (int j = 0; j < n; j += half) {
      for (int i = (j / half) % 2 == 0 ? half : 0; i < n; i += step) {
        double sum = 0.0;
        int count = 0;
        if (i - half >= 0) sum += g(i - half, j), ++count;
        if (i + half < n) sum += g(i + half, j), ++count;
        if (j - half >= 0) sum += g(i, j - half), ++count;
        if (j + half < n) sum += g(i, j + half), ++count;
        g(i, j) = sum / count + rng.uniform(-1.0, 1.0) * amplitude;
      }
    }
    amplitude *= roughness;
  }

  const auto [lo, hi] = std::minmax_element(hf.elevations.begin(), hf.elevations.end());
  const double min_v = *lo;
  const double range = *hi - *lo;
  for (double& e : hf.elevations) e = range > 0.0 ? (e - min_v) / range * kMaxElevation : 0.0;
  return hf;
}

RgbdImage render_view(const Heightfield& terrain, const CameraPose& pose, const Intrinsics& K) {
  const Eigen::Vector3d origin = pose.translation;
  if (terrain.contains(origin.x(), origin.z()) && origin.y() <= terrain.elevation(origin.x(), origin.z()))
    throw std::invalid_argument("render_view: camera is below the terrain surface");

  const Eigen::Vector3d sun = Eigen::Vector3d(0.5, 0.7, 0.3).normalized();
  RgbdImage img(K.width, K.height);
  Mask sky(K.width, K.height, false);

  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const Eigen::Vector3d dcam((x + 0.5 - K.cx) / K.focal_px, (y + 0.5 - K.cy) / K.focal_px, 1.0);
      const Eigen::Vector3d dir = pose.rotation * dcam;  // parameterized by camera depth
      auto height_above = [&](double s) {
        const Eigen::Vector3d p = origin + s * dir;
        return p.y() - terrain.elevation(p.x(), p.z());
      };

      double hit = -1.0;
      double s_prev = 0.0;
      double s = 0.01;
      while (s < kMaxRayDepth) {
        const Eigen::Vector3d p = origin + s * dir;
        if (!terrain.contains(p.x(), p.z())) break;
        if (p.y() > kMaxElevation && dir.y() >= 0.0) break;
        const double f = height_above(s);
        if (f <= 0.0) {
          double a = s_prev;
          double b = s;
          for (int it = 0; it < 48; ++it) {
            const double m = 0.5 * (a + b);
            (height_above(m) > 0.0 ? a : b) = m;
          }
          hit = 0.5 * (a + b);
          break;
        }
        s_prev = s;
        s += 0.02 + 0.012 * s;
      }

      const std::size_t i = static_cast<std::size_t>(y) * K.width + x;
      Eigen::Vector3d color;
      if (hit > 0.0) {
        const Eigen::Vector3d p = origin + hit * dir;
        const Eigen::Vector3d n = terrain.normal(p.x(), p.z());
        const double lambert = std::max(0.0, n.dot(sun));
        color = terrain_albedo(p.y(), n.y(), p.x(), p.z()) * (0.35 + 0.65 * lambert);
        const double fog = 1.0 - std::exp(-hit / 120.0);
        color = mix(color, kHorizon, fog);
        img.at(i, RgbdImage::kDisparity) = static_cast<float>(std::clamp(1.0 / hit, kMinDisparity, 1.0));
      } else {
        color = sky_color(dir.normalized());
        img.at(i, RgbdImage::kDisparity) = 0.0f;
        sky.set(i, true);
      }
      for (int c = 0; c < 3; ++c) img.at(i, c) = static_cast<float>(std::clamp(color[c], 0.0, 1.0));
    }
  }
  img.sky = std::move(sky);
  return img;
}

RgbdImage fill_missing_with_noise(const RgbdImage& image, const Mask& mask, Rng& rng) {
  if (mask.width() != image.width || mask.height() != image.height)
    throw std::invalid_argument("fill_missing_with_noise: mask shape mismatch");
  RgbdImage out = image;
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    if (!mask[i]) continue;
    for (int c = 0; c < RgbdImage::kChannels; ++c) out.at(i, c) = static_cast<float>((rng.normal() + 1.0) * 0.5);
  }
  return out;
}

TrainingPair make_pseudo_pair(const RgbdImage& gt, const CameraPose& pose0, const Intrinsics& K,
                              const TrainingPoseRange& range, const AutocruiseParams& params, Rng& rng) {
  const CameraPose pseudo = sample_training_pose(pose0, range, params, rng);
  const MeshProjection there = warp_rgbd(gt, pose0, pseudo, K);
  const MeshProjection back = warp_rgbd(there.image, pseudo, pose0, K, &there.missing);

  TrainingPair pair;
  pair.mask = back.missing;
  pair.corrupted = fill_missing_with_noise(back.image, pair.mask, rng);
  pair.corrupted.sky.reset();
  pair.target = gt;
  pair.ground = ~gt.sky_or_empty();
  return pair;
}

ViewSample sample_terrain_camera(const Heightfield& terrain, Rng& rng, double fov_lo, double fov_hi) {
  const double quarter = terrain.extent() / 4.0;
  const double x = rng.uniform(-quarter, quarter);
  const double z = rng.uniform(-quarter, quarter);
  const double altitude = rng.uniform(0.7, 1.6);
  const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double pitch = rng.uniform(-12.0, 4.0) * std::numbers::pi / 180.0;
  ViewSample out;
  out.pose = CameraPose::look({x, terrain.elevation(x, z) + altitude, z}, yaw, pitch);
  out.fov_deg = rng.uniform(fov_lo, fov_hi);
  return out;
}

TerrainSample make_terrain_sample(std::uint64_t seed, std::uint64_t index, int resolution, double fov_lo,
                                  double fov_hi) {
  Rng rng = Rng(seed, "terrain-sample").fork(index);
  const Heightfield terrain = generate_heightfield(rng.next(), kTerrainGridSize, kTerrainRoughness);
  TerrainSample sample;
  for (int attempt = 0; attempt < 32; ++attempt) {
    sample.view = sample_terrain_camera(terrain, rng, fov_lo, fov_hi);
    sample.image = render_view(terrain, sample.view.pose, intrinsics_from_fov(sample.view.fov_deg, resolution, resolution));
    const auto fractions = region_fractions(sample.image.disparity_map());
    if (fractions.sky <= 0.8 && fractions.near <= 0.7) break;
  }
  return sample;
}

}  // namespace flythrough
