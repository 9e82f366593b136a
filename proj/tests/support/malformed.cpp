#include "malformed.hpp"

#include <cstring>
#include <limits>

#include "flythrough/io.hpp"

namespace flythrough::testing {

namespace {

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void put_u64(std::vector<std::uint8_t>& b, std::size_t at, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void put_f32(std::vector<std::uint8_t>& b, std::size_t at, float v) {
  std::uint32_t raw;
  std::memcpy(&raw, &v, 4);
  put_u32(b, at, raw);
}

}  // namespace

std::vector<MalformedCase> malformed_rgbd_cases(const RgbdImage& image) {
  RgbdImage with_sky = image;
  if (!with_sky.sky) with_sky.sky = Mask(image.width, image.height);
  const auto good = encode_rgbd(with_sky);
  const std::size_t payload = kRgbdHeaderSize;
  const std::size_t sky_at = payload + image.pixel_count() * 16;
  std::vector<MalformedCase> out;
  auto add = [&](std::string name, std::vector<std::uint8_t> bytes, std::uint64_t offset) {
    out.push_back({std::move(name), std::move(bytes), offset});
  };

  auto b = good;
  b[0] = 'X';
  add("bad magic", b, 0);
  b = good;
  put_u32(b, 4, 2);
  add("bad version", b, 4);
  b = good;
  put_u32(b, 8, 0);
  add("zero width", b, 8);
  b = good;
  b[16] = 7;
  add("bad sky flag", b, 16);
  b = good;
  b.resize(good.size() - 3);
  add("truncated payload", b, b.size());
  b = good;
  b.resize(10);
  add("truncated header", b, 8);
  b = good;
  b.push_back(0);
  add("trailing bytes", b, good.size());
  b = good;
  put_f32(b, payload + 20, std::numeric_limits<float>::quiet_NaN());
  add("non-finite pixel", b, payload + 20);
  b = good;
  put_f32(b, payload + 4, std::numeric_limits<float>::infinity());
  add("infinite pixel", b, payload + 4);
  b = good;
  b[sky_at + 1] = 2;
  add("bad sky byte", b, sky_at + 1);
  return out;
}

std::vector<MalformedCase> malformed_checkpoint_cases(const DenoiserModel& model) {
  const auto good = encode_checkpoint(model);
  const auto header = decode_checkpoint_header(good);
  const std::size_t json_at = 16;
  std::vector<MalformedCase> out;
  auto add = [&](std::string name, std::vector<std::uint8_t> bytes, std::uint64_t offset) {
    out.push_back({std::move(name), std::move(bytes), offset});
  };

  auto b = good;
  b[1] = 'X';
  add("bad magic", b, 0);
  b = good;
  put_u32(b, 4, 9);
  add("bad version", b, 4);
  b = good;
  put_u64(b, 8, good.size());
  add("header length past end", b, 8);
  b = good;
  b[json_at] = '#';
  add("invalid header JSON", b, json_at);
  b = good;
  b.resize(good.size() - 1);
  add("truncated payload", b, b.size());
  b = good;
  b.insert(b.end(), {0, 0, 0, 0});
  add("trailing bytes", b, good.size());
  b = good;
  put_f32(b, header.payload_offset + 8, std::numeric_limits<float>::quiet_NaN());
  add("non-finite weight", b, header.payload_offset + 8);
  b = good;
  b.resize(6);
  add("truncated version", b, 4);
  return out;
}

}  // namespace flythrough::testing
