#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flythrough/diffusion.hpp"
#include "flythrough/dreamer.hpp"
#include "flythrough/eval.hpp"
#include "flythrough/image.hpp"
#include "flythrough/training.hpp"

namespace flythrough {

/// Malformed file. `offset` is the byte position where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& message, std::uint64_t offset)
      : std::runtime_error(message + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// .rgbd: "RGBD", u32 version, u32 width, u32 height, u8 has_sky,
// W*H*4 little-endian float32 (R,G,B,D interleaved), optional W*H sky bytes.
inline constexpr std::uint32_t kRgbdVersion = 1;
inline constexpr std::size_t kRgbdHeaderSize = 17;

std::vector<std::uint8_t> encode_rgbd(const RgbdImage& image);
RgbdImage decode_rgbd(std::span<const std::uint8_t> bytes);
void write_rgbd(const RgbdImage& image, const std::filesystem::path& path);
RgbdImage read_rgbd(const std::filesystem::path& path);

// Checkpoint: "DDCP", u32 version, u64 json_len, JSON header, float32 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  std::vector<int> shape;
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
};

struct CheckpointHeader {
  std::vector<CheckpointTensor> tensors;
  nlohmann::json meta;
  std::uint64_t payload_offset = 0;
};

struct LoadedCheckpoint {
  DenoiserModel model;
  /// Empty moments when the file carries no optimizer state.
  AdamState optimizer;
  bool has_optimizer = false;
  CheckpointHeader header;
};

/// Writes live weights, EMA weights ("ema." prefix) and, when given, Adam
/// moments ("opt.m." / "opt.v." prefixes).
std::vector<std::uint8_t> encode_checkpoint(const DenoiserModel& model, const AdamState* optimizer = nullptr);
LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
CheckpointHeader decode_checkpoint_header(std::span<const std::uint8_t> bytes);
void write_checkpoint(const DenoiserModel& model, const std::filesystem::path& path,
                      const AdamState* optimizer = nullptr);
LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

struct PoseRecord {
  CameraPose pose;
  double fov_deg = 55.0;
};

nlohmann::json poses_to_json(const std::vector<CameraPose>& poses, double fov_deg);
std::vector<PoseRecord> poses_from_json(const nlohmann::json& j);
std::vector<PoseRecord> read_poses(const std::filesystem::path& path);

nlohmann::json provenance_to_json(const Provenance& provenance);
nlohmann::json report_to_json(const ConsistencyReport& report);

struct DatasetManifest {
  std::uint64_t seed = 0;
  int count = 0;
  int size = 32;
  double fov_lo = kTrainFovLo;
  double fov_hi = kTrainFovHi;
  std::vector<std::string> files;
  std::vector<double> fov_deg;
};

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dir);
/// Reads every sample listed in `<dir>/manifest.json`.
std::vector<RgbdImage> load_dataset(const std::filesystem::path& dir);

std::string sample_file_name(int index);
std::string frame_file_name(int index);

}  // namespace flythrough
