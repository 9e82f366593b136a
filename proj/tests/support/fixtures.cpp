#include "fixtures.hpp"

#include <atomic>
#include <unistd.h>

namespace flythrough::testing {

RgbdImage random_image(int width, int height, Rng& rng, double sky_fraction) {
  RgbdImage img(width, height);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  if (sky_fraction > 0.0) {
    Mask sky(width, height);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      if (rng.uniform() < sky_fraction) {
        sky.set(i, true);
        img.at(i, RgbdImage::kDisparity) = 0.0f;
      }
    }
    img.sky = sky;
  }
  return img;
}

RgbdImage constant_image(int width, int height, float rgb, float disparity) {
  RgbdImage img(width, height);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) img.at(i, c) = rgb;
    img.at(i, RgbdImage::kDisparity) = disparity;
  }
  return img;
}

Tensor<float> random_tensor(int c, int h, int w, Rng& rng) {
  Tensor<float> t(c, h, w);
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

DenoiserModel small_model(int resolution, int timesteps, std::uint64_t seed) {
  UNetConfig cfg;
  cfg.channels = {4, 8, 8};
  cfg.time_features = 8;
  cfg.embed_dim = 8;
  DenoiserModel model(cfg);
  Rng rng(seed, "test-model");
  model.net().init(rng, InitMode::all_random);
  model.copy_net_to_ema();
  model.meta.resolution = resolution;
  model.meta.timesteps = timesteps;
  return model;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("flythrough_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace flythrough::testing
