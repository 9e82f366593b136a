#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "fixtures.hpp"
#include "flythrough/geometry.hpp"

using namespace flythrough;
using flythrough::testing::constant_image;

namespace {

Eigen::Matrix4d homogeneous(const CameraPose& pose) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = pose.rotation;
  m.topRightCorner<3, 1>() = pose.translation;
  return m;
}

Eigen::Matrix3d camera_matrix(const Intrinsics& K) {
  Eigen::Matrix3d m;
  m << K.focal_px, 0, K.cx, 0, K.focal_px, K.cy, 0, 0, 1;
  return m;
}

CameraPose random_pose(Rng& rng, double max_offset, double max_angle) {
  const Eigen::Vector3d t(rng.uniform(-max_offset, max_offset), rng.uniform(-max_offset, max_offset),
                          rng.uniform(-max_offset, max_offset));
  return CameraPose::look(t, rng.uniform(-max_angle, max_angle), rng.uniform(-max_angle, max_angle));
}

// Low-frequency disparity in [0.2, 0.6] so no quad is stretch-flagged.
RgbdImage smooth_image(int w, int h, Rng& rng) {
  RgbdImage img(w, h);
  const double a = rng.uniform(0.5, 2.0), b = rng.uniform(0.5, 2.0), ph = rng.uniform(0.0, 6.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(rng.uniform());
      img.at(x, y, 3) = static_cast<float>(0.4 + 0.2 * std::sin(a * x / w * 6.0 + b * y / h * 6.0 + ph));
    }
  return img;
}

}  // namespace

TEST(Intrinsics, FocalExamples) {
  EXPECT_DOUBLE_EQ(intrinsics_from_fov(90.0, 64, 64).focal_px, 32.0);
  EXPECT_NEAR(intrinsics_from_fov(55.0, 128, 128).focal_px, 64.0 / std::tan(27.5 * std::numbers::pi / 180.0), 1e-12);
  EXPECT_NEAR(intrinsics_from_fov(55.0, 128, 128).focal_px, 122.943, 5e-4);
  EXPECT_NEAR(intrinsics_from_fov(60.0, 32, 32).focal_px, 27.71, 0.005);
  const auto K = intrinsics_from_fov(60.0, 32, 24);
  EXPECT_EQ(K.cx, 16.0);
  EXPECT_EQ(K.cy, 12.0);
}

TEST(Intrinsics, RejectsBadInput) {
  EXPECT_THROW(intrinsics_from_fov(0.0, 32, 32), std::invalid_argument);
  EXPECT_THROW(intrinsics_from_fov(180.0, 32, 32), std::invalid_argument);
  EXPECT_THROW(intrinsics_from_fov(55.0, 0, 32), std::invalid_argument);
}

TEST(Unproject, Examples) {
  const auto K = intrinsics_from_fov(90.0, 64, 64);
  EXPECT_TRUE(unproject_pixel(K.cx, K.cy, 1.0, K).isApprox(Eigen::Vector3d(0, 0, 1)));
  EXPECT_TRUE(unproject_pixel(K.cx + K.focal_px, K.cy, 0.5, K).isApprox(Eigen::Vector3d(2, 0, 2)));
  // K^{-1} (10, 20, 1) scaled to depth 4.
  const Eigen::Vector3d oracle = camera_matrix(K).inverse() * Eigen::Vector3d(10, 20, 1) * 4.0;
  EXPECT_NEAR((unproject_pixel(10, 20, 0.25, K) - oracle).norm(), 0.0, 1e-12);
  EXPECT_NEAR((oracle - Eigen::Vector3d(-2.75, -1.5, 4.0)).norm(), 0.0, 1e-12);
}

TEST(Project, Examples) {
  const auto K = intrinsics_from_fov(55.0, 32, 32);
  const CameraPose id;
  const auto p = project_point({0, 0, 2}, id, K);
  EXPECT_TRUE(p.in_front);
  EXPECT_DOUBLE_EQ(p.u, K.cx);
  EXPECT_DOUBLE_EQ(p.v, K.cy);
  EXPECT_DOUBLE_EQ(p.disparity, 0.5);
  EXPECT_FALSE(project_point({0, 0, -1}, id, K).in_front);

  const auto q = project_point(unproject_pixel(7.25, 19.5, 0.3, K), id, K);
  EXPECT_NEAR(q.u, 7.25, 1e-12);
  EXPECT_NEAR(q.v, 19.5, 1e-12);
  EXPECT_NEAR(q.disparity, 0.3, 1e-12);
}

TEST(Project, MatchesHomogeneousOracle) {
  Rng rng(11, "project-oracle");
  const auto K = intrinsics_from_fov(60.0, 48, 32);
  for (int i = 0; i < 200; ++i) {
    const CameraPose pose = random_pose(rng, 5.0, 1.0);
    const Eigen::Vector4d world(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10), 1.0);
    const Eigen::Vector4d cam = homogeneous(pose).inverse() * world;
    if (cam.z() < 0.1) continue;
    const Eigen::Vector3d pix = camera_matrix(K) * cam.head<3>();
    const auto p = project_point(world.head<3>(), pose, K);
    EXPECT_NEAR(p.u, pix.x() / pix.z(), 1e-9);
    EXPECT_NEAR(p.v, pix.y() / pix.z(), 1e-9);
    EXPECT_NEAR(p.disparity, 1.0 / cam.z(), 1e-12);
  }
}

TEST(Pose, LookConventions) {
  const auto pose = CameraPose::look({1, 2, 3}, 0.3, 0.2);
  EXPECT_TRUE(pose.is_valid());
  EXPECT_NEAR(pose.yaw(), 0.3, 1e-12);
  EXPECT_NEAR(pose.pitch(), 0.2, 1e-12);
  // Camera y points down in the world.
  EXPECT_LT(pose.rotation.col(1).y(), 0.0);
  EXPECT_THROW(CameraPose::look_along({0, 0, 0}, {0, 1, 0}), std::invalid_argument);
}

TEST(Warp, IdentityIsBitExactOnCleanValid) {
  Rng rng(3, "identity");
  for (int trial = 0; trial < 5; ++trial) {
    RgbdImage img = flythrough::testing::random_image(24, 20, rng);
    for (auto& v : img.pixels) v = std::max(v, 0.01f);
    const auto K = intrinsics_from_fov(55.0, img.width, img.height);
    const CameraPose pose = random_pose(rng, 3.0, 0.5);
    const auto out = warp_rgbd(img, pose, pose, K);
    EXPECT_EQ(out.valid.count(), img.pixel_count());
    const Mask disc = discontinuity_mask(img.disparity_map(), img.width, img.height);
    const Mask clean = out.clean_valid();
    std::size_t checked = 0;
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      if (!clean[i]) continue;
      ++checked;
      for (int c = 0; c < 4; ++c) ASSERT_EQ(out.image.at(i, c), img.at(i, c)) << "pixel " << i << " channel " << c;
    }
    EXPECT_GT(checked, 0u);
    // Missing pixels come only from stretched quads touching a discontinuity.
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
      if (out.missing[i]) {
        const int x = static_cast<int>(i % img.width), y = static_cast<int>(i / img.width);
        bool near_edge = false;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx >= 0 && yy >= 0 && xx < img.width && yy < img.height && disc.at(xx, yy)) near_edge = true;
          }
        EXPECT_TRUE(near_edge) << "pixel " << i;
      }
  }
}

TEST(Warp, IdentityOnSmoothImageHasNoMissing) {
  Rng rng(4, "identity-smooth");
  const RgbdImage img = smooth_image(32, 32, rng);
  const auto K = intrinsics_from_fov(55.0, 32, 32);
  const auto out = warp_rgbd(img, CameraPose{}, CameraPose{}, K);
  EXPECT_EQ(out.missing.count(), 0u);
  EXPECT_EQ(out.valid.count(), img.pixel_count());
  for (std::size_t i = 0; i < img.pixel_count(); ++i)
    for (int c = 0; c < 4; ++c) ASSERT_EQ(out.image.at(i, c), img.at(i, c));
}

TEST(Warp, ForwardTranslationCenterDisparity) {
  for (double d : {0.25, 0.5, 0.8}) {
    for (double delta : {0.1, 0.3, 0.5}) {
      const RgbdImage img = constant_image(33, 33, 0.5f, static_cast<float>(d));
      const auto K = intrinsics_from_fov(55.0, 33, 33);
      CameraPose dst;
      dst.translation = Eigen::Vector3d(0, 0, delta);
      const auto out = warp_rgbd(img, CameraPose{}, dst, K);
      const std::size_t center = 16 * 33 + 16;
      ASSERT_TRUE(out.valid[center]);
      EXPECT_NEAR(out.image.disparity(center), 1.0 / (1.0 / d - delta), 1e-6);
    }
  }
}

// Every surface point gets closer, so each warped vertex and every covered
// pixel of a fronto-parallel plane gains disparity.
TEST(Warp, ForwardMotionNeverDecreasesDisparity) {
  Rng rng(5, "forward-mono");
  const auto K = intrinsics_from_fov(55.0, 32, 32);
  for (int trial = 0; trial < 5; ++trial) {
    const RgbdImage img = smooth_image(32, 32, rng);
    CameraPose dst;
    dst.translation = Eigen::Vector3d(0, 0, rng.uniform(0.05, 0.8));
    const auto verts = transform_vertices(img, CameraPose{}, dst, K);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      ASSERT_GT(verts.depth[i], 0.0);
      EXPECT_GE(1.0 / verts.depth[i], img.disparity(i)) << "vertex " << i;
    }

    const float d = static_cast<float>(rng.uniform(0.2, 0.6));
    const RgbdImage plane = constant_image(32, 32, 0.5f, d);
    const auto out = warp_rgbd(plane, CameraPose{}, dst, K);
    EXPECT_EQ(out.valid.count(), plane.pixel_count());
    for (std::size_t i = 0; i < plane.pixel_count(); ++i)
      if (out.valid[i]) {
        EXPECT_GE(out.image.disparity(i), d) << "pixel " << i;
      }
  }
}

TEST(Warp, VertexLandingMatchesHomogeneousOracle) {
  Rng rng(6, "landing");
  const int w = 40, h = 32;
  const auto K = intrinsics_from_fov(60.0, w, h);
  const Eigen::Matrix3d Km = camera_matrix(K);
  int checked = 0, within = 0;
  while (checked < 1000) {
    RgbdImage img(w, h);
    const int x = static_cast<int>(rng.uniform_index(w)), y = static_cast<int>(rng.uniform_index(h));
    const double d = rng.uniform(0.05, 1.0);
    img.at(x, y, 3) = static_cast<float>(d);
    const CameraPose src = random_pose(rng, 2.0, 0.3);
    const CameraPose dst = random_pose(rng, 2.0, 0.3);
    const auto verts = transform_vertices(img, src, dst, K);
    const std::size_t i = static_cast<std::size_t>(y) * w + x;

    const Eigen::Vector3d cam_src = Km.inverse() * Eigen::Vector3d(x + 0.5, y + 0.5, 1.0) / double(img.disparity(i));
    const Eigen::Vector4d world = homogeneous(src) * cam_src.homogeneous();
    const Eigen::Vector4d cam_dst = homogeneous(dst).inverse() * world;
    if (cam_dst.z() <= 1e-3) continue;
    const Eigen::Vector3d pix = Km * cam_dst.head<3>();
    ++checked;
    const double du = verts.u[i] - pix.x() / pix.z(), dv = verts.v[i] - pix.y() / pix.z();
    within += std::hypot(du, dv) <= 0.5;
  }
  EXPECT_EQ(within, checked);
}

TEST(Warp, CoveredPixelsTakeNearestSurface) {
  // Two fronto-parallel layers: a near square in front of a far wall. After a
  // sideways move every covered pixel must show the nearer layer's disparity
  // whenever the near layer projects onto it.
  const int w = 32, h = 32;
  RgbdImage img = constant_image(w, h, 0.2f, 0.25f);
  for (int y = 10; y < 22; ++y)
    for (int x = 10; x < 22; ++x) {
      img.at(x, y, 3) = 0.9f;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.9f;
    }
  const auto K = intrinsics_from_fov(55.0, w, h);
  CameraPose dst;
  dst.translation = Eigen::Vector3d(0.1, 0, 0);
  const auto out = warp_rgbd(img, CameraPose{}, dst, K);
  const Mask clean = out.clean_valid();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (!clean[i]) continue;
    const float d = out.image.disparity(i);
    EXPECT_TRUE(std::abs(d - 0.25f) < 1e-5 || std::abs(d - 0.9f) < 1e-5) << d;
  }
}

TEST(Warp, MaskAlgebra) {
  Rng rng(7, "mask-algebra");
  for (int trial = 0; trial < 10; ++trial) {
    RgbdImage img = flythrough::testing::random_image(24, 24, rng, 0.2);
    const auto K = intrinsics_from_fov(55.0, 24, 24);
    const CameraPose src = random_pose(rng, 0.5, 0.2);
    const CameraPose dst = random_pose(rng, 0.5, 0.2);
    const auto out = warp_rgbd(img, src, dst, K);
    EXPECT_EQ((~out.valid & ~out.missing).count(), 0u) << "uncovered pixel not missing";
    ASSERT_TRUE(out.image.sky.has_value());
    EXPECT_EQ((*out.image.sky & out.missing).count(), 0u);
    EXPECT_EQ((*out.image.sky & ~out.valid).count(), 0u);
  }
  // No discontinuities anywhere: valid and missing are disjoint.
  const RgbdImage smooth = smooth_image(24, 24, rng);
  const auto K = intrinsics_from_fov(55.0, 24, 24);
  CameraPose dst;
  dst.translation = Eigen::Vector3d(0.1, -0.05, 0.3);
  const auto out = warp_rgbd(smooth, CameraPose{}, dst, K);
  EXPECT_EQ((out.valid & out.missing).count(), 0u);
  EXPECT_EQ(out.missing, ~out.valid);
}

TEST(Warp, SourceInvalidPixelsAreDropped) {
  Rng rng(8, "src-invalid");
  const RgbdImage img = smooth_image(16, 16, rng);
  const auto K = intrinsics_from_fov(55.0, 16, 16);
  Mask invalid(16, 16, true);
  const auto out = warp_rgbd(img, CameraPose{}, CameraPose{}, K, &invalid);
  EXPECT_EQ(out.valid.count(), 0u);
  EXPECT_EQ(out.missing.count(), img.pixel_count());
}

TEST(Warp, Deterministic) {
  Rng rng(9, "warp-det");
  const RgbdImage img = flythrough::testing::random_image(24, 24, rng, 0.1);
  const auto K = intrinsics_from_fov(55.0, 24, 24);
  const CameraPose dst = CameraPose::look({0.1, 0.0, 0.2}, 0.05, -0.03);
  const auto a = warp_rgbd(img, CameraPose{}, dst, K);
  const auto b = warp_rgbd(img, CameraPose{}, dst, K);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.valid, b.valid);
  EXPECT_EQ(a.missing, b.missing);
}

TEST(Discontinuity, Examples) {
  std::vector<float> flat(8 * 6, 0.4f);
  EXPECT_EQ(discontinuity_mask(flat, 8, 6).count(), 0u);

  std::vector<float> step(8 * 6, 0.1f);
  for (int y = 0; y < 6; ++y)
    for (int x = 4; x < 8; ++x) step[y * 8 + x] = 0.9f;
  const Mask m = discontinuity_mask(step, 8, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(m.at(x, y), x == 3) << x << "," << y;
}

TEST(Discontinuity, MatchesDirectScan) {
  Rng rng(10, "disc-scan");
  const int w = 17, h = 13;
  std::vector<float> d(w * h);
  for (auto& v : d) v = static_cast<float>(rng.uniform());
  const Mask m = discontinuity_mask(d, w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double c = d[y * w + x];
      const double right = x + 1 < w ? d[y * w + x + 1] : c;
      const double down = y + 1 < h ? d[(y + 1) * w + x] : c;
      EXPECT_EQ(m.at(x, y), std::abs(right - c) > 0.3 || std::abs(down - c) > 0.3);
    }
}

TEST(RegionFractions, Examples) {
  std::vector<float> sky(100, 0.05f), near(100, 0.5f), half(100, 0.05f);
  std::fill(half.begin() + 50, half.end(), 0.5f);
  EXPECT_DOUBLE_EQ(region_fractions(sky).sky, 1.0);
  EXPECT_DOUBLE_EQ(region_fractions(sky).near, 0.0);
  EXPECT_DOUBLE_EQ(region_fractions(near).sky, 0.0);
  EXPECT_DOUBLE_EQ(region_fractions(near).near, 1.0);
  EXPECT_DOUBLE_EQ(region_fractions(half).sky, 0.5);
  EXPECT_DOUBLE_EQ(region_fractions(half).near, 0.5);
}

TEST(MaskOps, Algebra) {
  Mask a(4, 3), b(4, 3);
  a.set(0, true);
  a.set(5, true);
  b.set(5, true);
  b.set(7, true);
  EXPECT_EQ((a | b).count(), 3u);
  EXPECT_EQ((a & b).count(), 1u);
  EXPECT_EQ((~a).count(), 10u);
  EXPECT_DOUBLE_EQ(a.fraction(), 2.0 / 12.0);
}
