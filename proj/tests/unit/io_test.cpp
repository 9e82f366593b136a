#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "malformed.hpp"
#include "flythrough/io.hpp"

using namespace flythrough;
using flythrough::testing::TempDir;

TEST(Rgbd, HeaderArithmetic) {
  const RgbdImage img(2, 2);
  EXPECT_EQ(encode_rgbd(img).size(), 4u + 4 + 4 + 4 + 1 + 64);
  RgbdImage sky = img;
  sky.sky = Mask(2, 2);
  EXPECT_EQ(encode_rgbd(sky).size(), 81u + 4);
}

TEST(Rgbd, LittleEndianLayout) {
  RgbdImage img(1, 1);
  img.at(0, 0) = 1.0f;  // 0x3f800000
  const auto b = encode_rgbd(img);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "RGBD");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[12], 1);
  EXPECT_EQ(b[16], 0);
  EXPECT_EQ(b[17], 0x00);
  EXPECT_EQ(b[19], 0x80);
  EXPECT_EQ(b[20], 0x3f);
}

TEST(Rgbd, RoundTripIsBitExact) {
  TempDir dir("rgbd");
  Rng rng(1, "rgbd");
  for (double sky : {0.0, 0.3}) {
    const RgbdImage img = flythrough::testing::random_image(7, 5, rng, sky);
    write_rgbd(img, dir / "a.rgbd");
    const RgbdImage back = read_rgbd(dir / "a.rgbd");
    EXPECT_EQ(back, img);
    write_rgbd(back, dir / "b.rgbd");
    EXPECT_EQ(read_file_bytes(dir / "a.rgbd"), read_file_bytes(dir / "b.rgbd"));
  }
}

TEST(Rgbd, RejectsNonFiniteOnWrite) {
  RgbdImage img(2, 2);
  img.at(0, 1) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(encode_rgbd(img), std::invalid_argument);
}

TEST(Rgbd, MalformedFilesReportOffsets) {
  Rng rng(2, "malformed");
  for (const auto& c : flythrough::testing::malformed_rgbd_cases(flythrough::testing::random_image(4, 3, rng, 0.2))) {
    try {
      decode_rgbd(c.bytes);
      ADD_FAILURE() << c.name << ": accepted";
    } catch (const FormatError& e) {
      EXPECT_EQ(e.offset(), c.expected_offset) << c.name << ": " << e.what();
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
    }
  }
}

TEST(Checkpoint, RoundTripRestoresSampling) {
  TempDir dir("ckpt");
  DenoiserModel model = flythrough::testing::small_model(8, 6, 3);
  model.meta.step = 17;
  model.meta.config_hash = 0xabcdef12345ull;
  // Make EMA differ from the live weights.
  Rng init(4, "live");
  model.net().init(init, InitMode::all_random);
  write_checkpoint(model, dir / "a.ddcp");
  LoadedCheckpoint loaded = read_checkpoint(dir / "a.ddcp");
  EXPECT_FALSE(loaded.has_optimizer);
  EXPECT_EQ(loaded.model.meta.step, 17);
  EXPECT_EQ(loaded.model.meta.timesteps, 6);
  EXPECT_EQ(loaded.model.meta.resolution, 8);
  EXPECT_EQ(loaded.model.meta.config_hash, 0xabcdef12345ull);
  EXPECT_EQ(loaded.model.config(), model.config());
  for (std::size_t p = 0; p < model.net().parameters().count(); ++p) {
    EXPECT_EQ(loaded.model.net().parameters()[p].value, model.net().parameters()[p].value);
    EXPECT_EQ(loaded.model.ema().parameters()[p].value, model.ema().parameters()[p].value);
  }
  write_checkpoint(loaded.model, dir / "b.ddcp");
  EXPECT_EQ(read_file_bytes(dir / "a.ddcp"), read_file_bytes(dir / "b.ddcp"));

  Rng rng(5, "source");
  const RgbdImage source = flythrough::testing::random_image(8, 8, rng, 0.2);
  const Conditioning cond = make_masked_conditioning(source, Mask(8, 8), kWarpedPrev);
  const auto provider = [&](Rng&) -> const Conditioning& { return cond; };
  const auto schedule = make_schedule(6, 1e-4, 0.05);
  Rng a(6, "sample"), b(6, "sample");
  const Mask ground = ~source.sky_or_empty();
  EXPECT_EQ(sample_refine(model, provider, schedule, {}, ground, source, a),
            sample_refine(loaded.model, provider, schedule, {}, ground, source, b));
}

TEST(Checkpoint, OptimizerStateRoundTrip) {
  DenoiserModel model = flythrough::testing::small_model(8, 6, 7);
  AdamState opt;
  opt.reset(model.net().parameters());
  opt.step = 3;
  model.meta.step = 3;
  opt.m[1][0] = 0.25f;
  opt.v.back().back() = 0.5f;
  const auto bytes = encode_checkpoint(model, &opt);
  const auto header = decode_checkpoint_header(bytes);
  const std::size_t n = model.net().parameters().count();
  ASSERT_EQ(header.tensors.size(), 4 * n);
  EXPECT_EQ(header.tensors[n].name, "ema." + model.net().parameters()[0].name);
  EXPECT_EQ(header.tensors[2 * n].name, "opt.m." + model.net().parameters()[0].name);
  EXPECT_EQ(header.tensors[3 * n].name, "opt.v." + model.net().parameters()[0].name);
  EXPECT_TRUE(header.meta.at("has_optimizer").get<bool>());
  const auto loaded = decode_checkpoint(bytes);
  ASSERT_TRUE(loaded.has_optimizer);
  EXPECT_EQ(loaded.optimizer.step, 3);
  EXPECT_EQ(loaded.optimizer.m, opt.m);
  EXPECT_EQ(loaded.optimizer.v, opt.v);
  EXPECT_EQ(encode_checkpoint(loaded.model, &loaded.optimizer), bytes);
}

TEST(Checkpoint, MalformedFilesReportOffsets) {
  const DenoiserModel model = flythrough::testing::small_model(8, 6, 8);
  for (const auto& c : flythrough::testing::malformed_checkpoint_cases(model)) {
    try {
      decode_checkpoint(c.bytes);
      ADD_FAILURE() << c.name << ": accepted";
    } catch (const FormatError& e) {
      EXPECT_EQ(e.offset(), c.expected_offset) << c.name << ": " << e.what();
    }
  }
}

TEST(Checkpoint, HeaderMismatchesAreRejected) {
  const DenoiserModel model = flythrough::testing::small_model(8, 6, 9);
  const auto good = encode_checkpoint(model);
  const auto header = decode_checkpoint_header(good);
  const std::string text(good.begin() + 16, good.begin() + static_cast<std::ptrdiff_t>(header.payload_offset));
  auto rebuild = [&](std::string json_text) {
    std::vector<std::uint8_t> out(good.begin(), good.begin() + 8);
    const std::uint64_t len = json_text.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    out.insert(out.end(), json_text.begin(), json_text.end());
    out.insert(out.end(), good.begin() + static_cast<std::ptrdiff_t>(header.payload_offset), good.end());
    return out;
  };
  auto j = nlohmann::json::parse(text);
  EXPECT_NO_THROW(decode_checkpoint(rebuild(j.dump())));

  auto renamed = j;
  renamed["tensors"][0]["name"] = "mystery";
  EXPECT_THROW(decode_checkpoint(rebuild(renamed.dump())), FormatError);

  auto resized = j;
  resized["tensors"][0]["nbytes"] = resized["tensors"][0]["nbytes"].get<std::uint64_t>() + 4;
  EXPECT_THROW(decode_checkpoint(rebuild(resized.dump())), FormatError);

  auto gap = j;
  gap["tensors"][1]["offset"] = gap["tensors"][1]["offset"].get<std::uint64_t>() + 4;
  EXPECT_THROW(decode_checkpoint(rebuild(gap.dump())), FormatError);

  auto no_meta = j;
  no_meta.erase("meta");
  EXPECT_THROW(decode_checkpoint(rebuild(no_meta.dump())), FormatError);
}

TEST(Poses, JsonRoundTrip) {
  const std::vector<CameraPose> poses{CameraPose{}, CameraPose::look({1, 2, 3}, 0.3, -0.2)};
  const auto j = poses_to_json(poses, 55.0);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[1]["R"].size(), 9u);
  EXPECT_EQ(j[1]["t"][2].get<double>(), 3.0);
  const auto back = poses_from_json(nlohmann::json::parse(j.dump()));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].pose, poses[1]);
  EXPECT_EQ(back[1].fov_deg, 55.0);
  auto bad = j;
  bad[0]["R"][0] = 5.0;
  EXPECT_THROW(poses_from_json(bad), std::invalid_argument);
}

TEST(Reports, NullMeanWhenAllSkipped) {
  ConsistencyReport r;
  r.skipped.push_back({0, 1, 0.01});
  const auto j = report_to_json(r);
  EXPECT_TRUE(j["mean_adjacent_psnr_db"].is_null());
  EXPECT_EQ(j["skipped"][0]["j"], 1);
  r.mean_adjacent_psnr_db = 25.0;
  EXPECT_EQ(report_to_json(r)["mean_adjacent_psnr_db"].get<double>(), 25.0);
}

TEST(Dataset, ManifestRoundTrip) {
  TempDir dir("dataset");
  DatasetManifest m;
  m.seed = 4;
  m.count = 2;
  m.size = 4;
  Rng rng(10, "ds");
  for (int i = 0; i < 2; ++i) {
    m.files.push_back(sample_file_name(i));
    m.fov_deg.push_back(50.0 + i);
    write_rgbd(flythrough::testing::random_image(4, 4, rng), dir / m.files.back());
  }
  write_text_file(dir / "manifest.json", manifest_to_json(m).dump());
  const auto back = read_manifest(dir.path());
  EXPECT_EQ(back.files, m.files);
  EXPECT_EQ(back.fov_lo, m.fov_lo);
  EXPECT_EQ(load_dataset(dir.path()).size(), 2u);
  EXPECT_EQ(sample_file_name(3), "sample_000003.rgbd");
  EXPECT_EQ(frame_file_name(12), "frame_0012.rgbd");
}
