#include "flythrough/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace flythrough {

using json = nlohmann::json;

namespace {

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, const char* what) : data_(data), what_(what) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::size_t n, const char* field) const {
    if (remaining() < n) fail(std::string("truncated ") + field, pos_);
  }
  [[noreturn]] void fail(const std::string& message, std::uint64_t offset) const {
    throw FormatError(std::string(what_) + ": " + message, offset);
  }

  std::uint8_t u8(const char* field) {
    need(1, field);
    return data_[pos_++];
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
  void magic(const char (&expected)[5]) {
    need(4, "magic");
    if (std::memcmp(data_.data(), expected, 4) != 0) fail(std::string("bad magic, expected '") + expected + "'", 0);
    pos_ += 4;
  }

 private:
  std::span<const std::uint8_t> data_;
  const char* what_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> encode_rgbd(const RgbdImage& image) {
  if (image.width <= 0 || image.height <= 0) throw std::invalid_argument("encode_rgbd: empty image");
  if (image.pixels.size() != image.pixel_count() * RgbdImage::kChannels)
    throw std::invalid_argument("encode_rgbd: pixel buffer size mismatch");
  if (!image.all_finite()) throw std::invalid_argument("encode_rgbd: image has non-finite values");
  Writer w;
  w.bytes("RGBD", 4);
  w.u32(kRgbdVersion);
  w.u32(static_cast<std::uint32_t>(image.width));
  w.u32(static_cast<std::uint32_t>(image.height));
  w.u8(image.sky ? 1 : 0);
  for (float v : image.pixels) w.f32(v);
  if (image.sky) {
    if (image.sky->width() != image.width || image.sky->height() != image.height)
      throw std::invalid_argument("encode_rgbd: sky mask shape mismatch");
    for (std::uint8_t b : image.sky->bytes()) w.u8(b);
  }
  return w.take();
}

RgbdImage decode_rgbd(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "rgbd");
  r.magic("RGBD");
  const std::size_t version_at = r.pos();
  if (r.u32("version") != kRgbdVersion) r.fail("unsupported version", version_at);
  const std::size_t dims_at = r.pos();
  const std::uint32_t width = r.u32("width");
  const std::uint32_t height = r.u32("height");
  if (width == 0 || height == 0 || width > 65536 || height > 65536) r.fail("invalid dimensions", dims_at);
  const std::size_t flag_at = r.pos();
  const std::uint8_t has_sky = r.u8("has_sky flag");
  if (has_sky > 1) r.fail("has_sky flag must be 0 or 1", flag_at);

  RgbdImage image(static_cast<int>(width), static_cast<int>(height));
  const std::size_t n = image.pixels.size();
  const std::size_t expected = n * 4 + (has_sky ? image.pixel_count() : 0);
  if (r.remaining() < expected) r.fail("truncated payload", bytes.size());
  if (r.remaining() > expected) r.fail("trailing bytes after payload", r.pos() + expected);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = r.pos();
    const float v = r.f32("pixel");
    if (!std::isfinite(v)) r.fail("non-finite pixel value", at);
    image.pixels[i] = v;
  }
  if (has_sky) {
    Mask sky(image.width, image.height);
    for (std::size_t i = 0; i < sky.size(); ++i) {
      const std::size_t at = r.pos();
      const std::uint8_t b = r.u8("sky mask");
      if (b > 1) r.fail("sky mask byte must be 0 or 1", at);
      sky.set(i, b == 1);
    }
    image.sky = std::move(sky);
  }
  return image;
}

void write_rgbd(const RgbdImage& image, const std::filesystem::path& path) { write_file_bytes(path, encode_rgbd(image)); }

RgbdImage read_rgbd(const std::filesystem::path& path) { return decode_rgbd(read_file_bytes(path)); }

namespace {

template <typename Model, typename Optimizer>
struct NamedBuffer {
  std::string name;
  const std::vector<int>* shape;
  decltype(&std::declval<Model&>().net().parameters()[0].value) values;
};

/// Tensors in file order; constness of the value pointers follows `Model`.
template <typename Model, typename Optimizer>
std::vector<NamedBuffer<Model, Optimizer>> checkpoint_buffers(Model& model, Optimizer* optimizer) {
  std::vector<NamedBuffer<Model, Optimizer>> out;
  auto& net = model.net().parameters();
  auto& ema = model.ema().parameters();
  for (std::size_t i = 0; i < net.count(); ++i) out.push_back({net[i].name, &net[i].shape, &net[i].value});
  for (std::size_t i = 0; i < ema.count(); ++i) out.push_back({"ema." + ema[i].name, &ema[i].shape, &ema[i].value});
  if (optimizer) {
    if (optimizer->m.size() != net.count() || optimizer->v.size() != net.count())
      throw std::invalid_argument("checkpoint: optimizer state does not match the model");
    for (std::size_t i = 0; i < net.count(); ++i) out.push_back({"opt.m." + net[i].name, &net[i].shape, &optimizer->m[i]});
    for (std::size_t i = 0; i < net.count(); ++i) out.push_back({"opt.v." + net[i].name, &net[i].shape, &optimizer->v[i]});
  }
  return out;
}

json model_meta_json(const DenoiserModel& model, bool has_optimizer) {
  const UNetConfig& c = model.config();
  return json{{"step", model.meta.step},
              {"T", model.meta.timesteps},
              {"resolution", model.meta.resolution},
              {"config_hash", model.meta.config_hash},
              {"in_channels", c.in_channels},
              {"out_channels", c.out_channels},
              {"channels", c.channels},
              {"time_features", c.time_features},
              {"embed_dim", c.embed_dim},
              {"has_optimizer", has_optimizer}};
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const DenoiserModel& model, const AdamState* optimizer) {
  const auto buffers = checkpoint_buffers(model, optimizer);
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& b : buffers) {
    const std::uint64_t nbytes = b.values->size() * 4;
    tensors.push_back(json{{"name", b.name}, {"shape", *b.shape}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string header = json{{"tensors", tensors}, {"meta", model_meta_json(model, optimizer != nullptr)}}.dump();

  Writer w;
  w.bytes("DDCP", 4);
  w.u32(kCheckpointVersion);
  w.u64(header.size());
  w.bytes(header.data(), header.size());
  for (const auto& b : buffers)
    for (float v : *b.values) w.f32(v);
  return w.take();
}

CheckpointHeader decode_checkpoint_header(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "checkpoint");
  r.magic("DDCP");
  const std::size_t version_at = r.pos();
  if (r.u32("version") != kCheckpointVersion) r.fail("unsupported version", version_at);
  const std::size_t len_at = r.pos();
  const std::uint64_t json_len = r.u64("header length");
  if (json_len > r.remaining()) r.fail("header length exceeds file size", len_at);
  const std::size_t json_at = r.pos();

  const auto* text = reinterpret_cast<const char*>(bytes.data() + json_at);
  json header;
  try {
    header = json::parse(text, text + json_len);
  } catch (const json::parse_error& e) {
    r.fail(std::string("invalid JSON header: ") + e.what(), json_at + (e.byte > 0 ? e.byte - 1 : 0));
  }

  CheckpointHeader out;
  out.payload_offset = json_at + json_len;
  try {
    out.meta = header.at("meta");
    for (const auto& key : {"step", "T", "resolution", "config_hash", "channels", "time_features", "embed_dim",
                            "in_channels", "out_channels"})
      (void)out.meta.at(key);
    std::uint64_t expected_offset = 0;
    for (const auto& t : header.at("tensors")) {
      CheckpointTensor ct;
      ct.name = t.at("name").get<std::string>();
      ct.shape = t.at("shape").get<std::vector<int>>();
      ct.offset = t.at("offset").get<std::uint64_t>();
      ct.nbytes = t.at("nbytes").get<std::uint64_t>();
      std::uint64_t count = 1;
      for (int d : ct.shape) {
        if (d <= 0) r.fail("tensor '" + ct.name + "' has a non-positive dimension", json_at);
        count *= static_cast<std::uint64_t>(d);
      }
      if (ct.nbytes != count * 4) r.fail("tensor '" + ct.name + "' nbytes does not match its shape", json_at);
      if (ct.offset != expected_offset)
        r.fail("tensor '" + ct.name + "' is not contiguous with the previous tensor", out.payload_offset + ct.offset);
      expected_offset += ct.nbytes;
      out.tensors.push_back(std::move(ct));
    }
    const std::uint64_t payload = bytes.size() - out.payload_offset;
    if (payload < expected_offset) r.fail("truncated payload", bytes.size());
    if (payload > expected_offset) r.fail("trailing bytes after payload", out.payload_offset + expected_offset);
  } catch (const json::exception& e) {
    r.fail(std::string("malformed header: ") + e.what(), json_at);
  }
  return out;
}

LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  CheckpointHeader header = decode_checkpoint_header(bytes);
  const json meta = header.meta;
  const std::size_t json_at = 16;
  UNetConfig config;
  try {
    config.in_channels = meta.at("in_channels").get<int>();
    config.out_channels = meta.at("out_channels").get<int>();
    config.channels = meta.at("channels").get<std::array<int, 3>>();
    config.time_features = meta.at("time_features").get<int>();
    config.embed_dim = meta.at("embed_dim").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed model meta: ") + e.what(), json_at);
  }
  if (config.in_channels != 9 || config.out_channels != 4 || config.channels[0] <= 0 || config.channels[1] <= 0 ||
      config.channels[2] <= 0 || config.time_features <= 0 || config.time_features % 2 != 0 || config.embed_dim <= 0)
    throw FormatError("checkpoint: unsupported model configuration", json_at);

  LoadedCheckpoint out{DenoiserModel(config), AdamState{}, meta.value("has_optimizer", false), std::move(header)};
  try {
    out.model.meta.step = meta.at("step").get<std::int64_t>();
    out.model.meta.timesteps = meta.at("T").get<int>();
    out.model.meta.resolution = meta.at("resolution").get<int>();
    out.model.meta.config_hash = meta.at("config_hash").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed meta: ") + e.what(), json_at);
  }
  if (out.has_optimizer) {
    out.optimizer.reset(out.model.net().parameters());
    out.optimizer.step = out.model.meta.step;
  }

  AdamState* opt = out.has_optimizer ? &out.optimizer : nullptr;
  const auto buffers = checkpoint_buffers(out.model, opt);
  const auto& listed = out.header.tensors;
  if (listed.size() != buffers.size())
    throw FormatError("checkpoint: expected " + std::to_string(buffers.size()) + " tensors, header lists " +
                          std::to_string(listed.size()),
                      json_at);
  for (std::size_t k = 0; k < buffers.size(); ++k) {
    const CheckpointTensor& t = listed[k];
    const std::uint64_t start = out.header.payload_offset + t.offset;
    if (t.name != buffers[k].name)
      throw FormatError("checkpoint: expected tensor '" + buffers[k].name + "', found '" + t.name + "'", start);
    if (t.shape != *buffers[k].shape) throw FormatError("checkpoint: shape mismatch for '" + t.name + "'", start);
    auto& dst = *buffers[k].values;
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const std::uint64_t at = start + 4 * i;
      std::uint32_t raw = 0;
      for (int b = 0; b < 4; ++b) raw |= static_cast<std::uint32_t>(bytes[at + b]) << (8 * b);
      const float v = std::bit_cast<float>(raw);
      if (!std::isfinite(v)) throw FormatError("checkpoint: non-finite value in '" + t.name + "'", at);
      dst[i] = v;
    }
  }
  return out;
}

void write_checkpoint(const DenoiserModel& model, const std::filesystem::path& path, const AdamState* optimizer) {
  write_file_bytes(path, encode_checkpoint(model, optimizer));
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

json poses_to_json(const std::vector<CameraPose>& poses, double fov_deg) {
  json out = json::array();
  for (const auto& p : poses) {
    std::vector<double> R;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) R.push_back(p.rotation(r, c));
    out.push_back(json{{"R", R}, {"t", {p.translation.x(), p.translation.y(), p.translation.z()}}, {"fov_deg", fov_deg}});
  }
  return out;
}

std::vector<PoseRecord> poses_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("poses: expected a JSON array");
  std::vector<PoseRecord> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const json& e = j[k];
    try {
      const auto R = e.at("R").get<std::vector<double>>();
      const auto t = e.at("t").get<std::vector<double>>();
      if (R.size() != 9 || t.size() != 3) throw std::invalid_argument("R needs 9 numbers and t needs 3");
      PoseRecord rec;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rec.pose.rotation(r, c) = R[static_cast<std::size_t>(3 * r + c)];
      rec.pose.translation = Eigen::Vector3d(t[0], t[1], t[2]);
      rec.fov_deg = e.at("fov_deg").get<double>();
      if (!rec.pose.is_valid()) throw std::invalid_argument("rotation is not orthonormal");
      out.push_back(rec);
    } catch (const std::exception& ex) {
      throw std::invalid_argument("poses: entry " + std::to_string(k) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<PoseRecord> read_poses(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("poses: " + path.string() + " is not valid JSON");
  return poses_from_json(j);
}

json provenance_to_json(const Provenance& p) {
  json frames = json::array();
  for (const auto& f : p.frames) {
    frames.push_back(json{{"index", f.index},
                          {"draws", f.draws},
                          {"counts", {{"warped_prev", f.counts[0]}, {"anchored", f.counts[1]}, {"lookahead", f.counts[2]}}},
                          {"anchor_frame", f.anchor_frame},
                          {"lookahead_frame", f.lookahead_frame},
                          {"lookahead_dropped", f.lookahead_dropped},
                          {"warped_missing_fraction", f.warped_missing_fraction},
                          {"lookahead_missing_fraction", f.lookahead_missing_fraction}});
  }
  return json{{"mode", std::string(to_string(p.mode))},
              {"seed", p.seed},
              {"anchor_refresh", p.anchor_refresh},
              {"lookahead_rebuild", p.lookahead_rebuild},
              {"lookahead_poses", poses_to_json(p.lookahead_poses, 0.0)},
              {"frames", frames}};
}

json report_to_json(const ConsistencyReport& report) {
  json pairs = json::array();
  for (const auto& s : report.per_pair)
    pairs.push_back(json{{"i", s.i},
                         {"j", s.j},
                         {"masked_psnr_db", s.masked_psnr_db},
                         {"masked_ssim", s.masked_ssim},
                         {"overlap_fraction", s.overlap_fraction}});
  json skipped = json::array();
  for (const auto& s : report.skipped) skipped.push_back(json{{"i", s.i}, {"j", s.j}, {"overlap_fraction", s.overlap_fraction}});
  json out{{"per_pair", pairs}, {"skipped", skipped}};
  out["mean_adjacent_psnr_db"] = report.mean_adjacent_psnr_db ? json(*report.mean_adjacent_psnr_db) : json(nullptr);
  out["mesh_alignment_psnr_db"] = report.mesh_alignment_psnr_db ? json(*report.mesh_alignment_psnr_db) : json(nullptr);
  return out;
}

json manifest_to_json(const DatasetManifest& m) {
  return json{{"seed", m.seed},          {"count", m.count}, {"size", m.size}, {"fov_range", {m.fov_lo, m.fov_hi}},
              {"files", m.files},        {"fov_deg", m.fov_deg}};
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto bytes = read_file_bytes(dir / "manifest.json");
  const json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("manifest.json is not valid JSON");
  DatasetManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.count = j.at("count").get<int>();
    m.size = j.at("size").get<int>();
    const auto range = j.at("fov_range").get<std::vector<double>>();
    if (range.size() != 2) throw std::invalid_argument("fov_range needs two numbers");
    m.fov_lo = range[0];
    m.fov_hi = range[1];
    m.files = j.at("files").get<std::vector<std::string>>();
    m.fov_deg = j.value("fov_deg", std::vector<double>{});
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("manifest.json: ") + e.what());
  }
  if (static_cast<int>(m.files.size()) != m.count) throw std::invalid_argument("manifest.json: count does not match files");
  return m;
}

std::vector<RgbdImage> load_dataset(const std::filesystem::path& dir) {
  const DatasetManifest m = read_manifest(dir);
  std::vector<RgbdImage> out;
  out.reserve(m.files.size());
  for (const auto& f : m.files) {
    if (f.find('/') != std::string::npos || f.find("..") != std::string::npos)
      throw std::invalid_argument("manifest.json: file names must be plain names");
    out.push_back(read_rgbd(dir / f));
    if (out.back().width != m.size || out.back().height != m.size)
      throw std::invalid_argument("dataset: " + f + " does not match the manifest size");
  }
  return out;
}

namespace {
std::string numbered(const char* pattern, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, index);
  return buf;
}
}  // namespace

std::string sample_file_name(int index) { return numbered("sample_%06d.rgbd", index); }
std::string frame_file_name(int index) { return numbered("frame_%04d.rgbd", index); }

}  // namespace flythrough
