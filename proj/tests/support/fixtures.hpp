#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "flythrough/diffusion.hpp"
#include "flythrough/image.hpp"
#include "flythrough/rng.hpp"

namespace flythrough::testing {

/// Image with uniform random RGBD in [0,1] and an optional random sky mask.
RgbdImage random_image(int width, int height, Rng& rng, double sky_fraction = 0.0);

/// Constant RGB and disparity, no sky.
RgbdImage constant_image(int width, int height, float rgb, float disparity);

Tensor<float> random_tensor(int c, int h, int w, Rng& rng);

/// Small denoiser with every tensor random so its outputs depend on all inputs.
DenoiserModel small_model(int resolution, int timesteps, std::uint64_t seed);

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace flythrough::testing
