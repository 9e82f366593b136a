#pragma once

#include <cstdint>
#include <vector>

#include "flythrough/geometry.hpp"
#include "flythrough/image.hpp"
#include "flythrough/rng.hpp"
#include "flythrough/trajectory.hpp"

namespace flythrough {

inline constexpr double kMaxElevation = 10.0;

/// Square elevation grid centred on the world origin; elevation is world +y.
struct Heightfield {
  int size = 0;
  double horizontal_scale = 2.0;
  std::vector<double> elevations;

  double at(int i, int j) const { return elevations[static_cast<std::size_t>(j) * size + i]; }
  double extent() const { return (size - 1) * horizontal_scale; }
  bool contains(double x, double z) const;
  /// Bilinear elevation at world (x, z); clamps to the border outside.
  double elevation(double x, double z) const;
  Eigen::Vector3d normal(double x, double z) const;
};

/// Diamond-square surface normalized to [0, kMaxElevation]. `n` must be 2^k + 1.
Heightfield generate_heightfield(std::uint64_t seed, int n, double roughness, double horizontal_scale = 2.0);

/// Ray-marched RGBD view of the terrain with an exact sky mask.
RgbdImage render_view(const Heightfield& terrain, const CameraPose& pose, const Intrinsics& K);

struct TrainingPair {
  RgbdImage corrupted;
  Mask mask;
  RgbdImage target;
  Mask ground;
};

/// Replace masked pixels (all channels) with N(0,1) noise drawn in normalized
/// [-1,1] space and stored back in [0,1] space.
RgbdImage fill_missing_with_noise(const RgbdImage& image, const Mask& mask, Rng& rng);

TrainingPair make_pseudo_pair(const RgbdImage& gt, const CameraPose& pose0, const Intrinsics& K,
                              const TrainingPoseRange& range, const AutocruiseParams& params, Rng& rng);

/// Camera placement used for dataset samples and evaluation inputs.
struct ViewSample {
  CameraPose pose;
  double fov_deg = 55.0;
};

ViewSample sample_terrain_camera(const Heightfield& terrain, Rng& rng, double fov_lo, double fov_hi);

/// Deterministic dataset sample: terrain and camera both derive from (seed, index).
struct TerrainSample {
  RgbdImage image;
  ViewSample view;
};

TerrainSample make_terrain_sample(std::uint64_t seed, std::uint64_t index, int resolution, double fov_lo,
                                  double fov_hi);

inline constexpr int kTerrainGridSize = 129;
inline constexpr double kTerrainRoughness = 0.55;

}  // namespace flythrough
