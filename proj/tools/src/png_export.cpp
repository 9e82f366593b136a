#include "flythrough/png_export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

#include <png.h>

namespace flythrough {

namespace {

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

void write_png(const std::filesystem::path& path, int width, int height, int color_type,
               const std::vector<std::uint8_t>& data) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = data.size() / static_cast<std::size_t>(height);
  for (int y = 0; y < height; ++y) png_write_row(png, data.data() + static_cast<std::size_t>(y) * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_rgb_png(const RgbdImage& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> data(image.pixel_count() * 3);
  for (std::size_t i = 0; i < image.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c) data[i * 3 + c] = to_byte(image.at(i, c));
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, data);
}

void write_disparity_png(const RgbdImage& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> data(image.pixel_count());
  for (std::size_t i = 0; i < image.pixel_count(); ++i) data[i] = to_byte(image.disparity(i));
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, data);
}

}  // namespace flythrough
