#include "flythrough/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flythrough {

Mask::Mask(int width, int height, bool value)
    : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, value ? 1 : 0) {
  if (width < 0 || height < 0) throw std::invalid_argument("Mask: negative dimensions");
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double Mask::fraction() const {
  return bits_.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits_.size());
}

Mask Mask::operator~() const {
  Mask out = *this;
  for (auto& b : out.bits_) b = b ? 0 : 1;
  return out;
}

Mask Mask::operator|(const Mask& other) const {
  if (other.width_ != width_ || other.height_ != height_) throw std::invalid_argument("Mask: shape mismatch");
  Mask out = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = (bits_[i] | other.bits_[i]) ? 1 : 0;
  return out;
}

Mask Mask::operator&(const Mask& other) const {
  if (other.width_ != width_ || other.height_ != height_) throw std::invalid_argument("Mask: shape mismatch");
  Mask out = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = (bits_[i] & other.bits_[i]) ? 1 : 0;
  return out;
}

std::vector<float> RgbdImage::disparity_map() const {
  std::vector<float> d(pixel_count());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = disparity(i);
  return d;
}

Mask RgbdImage::sky_or_empty() const { return sky ? *sky : Mask(width, height, false); }

bool RgbdImage::all_finite() const {
  return std::all_of(pixels.begin(), pixels.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace flythrough
