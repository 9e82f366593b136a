#pragma once

#include <filesystem>

#include "flythrough/image.hpp"

namespace flythrough {

/// 8-bit RGB PNG of the colour channels.
void write_rgb_png(const RgbdImage& image, const std::filesystem::path& path);
/// 8-bit grayscale PNG of the disparity channel.
void write_disparity_png(const RgbdImage& image, const std::filesystem::path& path);

}  // namespace flythrough
