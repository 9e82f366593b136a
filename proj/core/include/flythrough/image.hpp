#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace flythrough {

/// Row-major H×W boolean map.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, bool value = false);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return bits_.size(); }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(std::size_t i, bool value) { bits_[i] = value ? 1 : 0; }
  void set(int x, int y, bool value) { bits_[index(x, y)] = value ? 1 : 0; }

  std::size_t count() const;
  double fraction() const;
  bool any() const { return count() > 0; }

  Mask operator~() const;
  Mask operator|(const Mask& other) const;
  Mask operator&(const Mask& other) const;
  bool operator==(const Mask& other) const = default;

  std::span<const std::uint8_t> bytes() const { return bits_; }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// H×W×4 image: RGB in [0,1] followed by normalized disparity, interleaved.
struct RgbdImage {
  static constexpr int kChannels = 4;
  static constexpr int kDisparity = 3;

  int width = 0;
  int height = 0;
  std::vector<float> pixels;
  std::optional<Mask> sky;

  RgbdImage() = default;
  RgbdImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * kChannels, 0.0f) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }

  float& at(std::size_t pixel, int channel) { return pixels[pixel * kChannels + channel]; }
  float at(std::size_t pixel, int channel) const { return pixels[pixel * kChannels + channel]; }
  float& at(int x, int y, int channel) { return at(static_cast<std::size_t>(y) * width + x, channel); }
  float at(int x, int y, int channel) const { return at(static_cast<std::size_t>(y) * width + x, channel); }

  float disparity(std::size_t pixel) const { return at(pixel, kDisparity); }
  std::vector<float> disparity_map() const;

  /// Sky mask if present, otherwise an all-false mask.
  Mask sky_or_empty() const;

  bool all_finite() const;
  bool operator==(const RgbdImage& other) const = default;
};

}  // namespace flythrough
