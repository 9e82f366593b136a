#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "flythrough/image.hpp"

namespace flythrough {

/// Disparity at or below this value is sky, placed at kFarDepth.
inline constexpr double kMinDisparity = 1e-3;
inline constexpr double kFarDepth = 1000.0;
/// Camera-space depth at or below this is behind the camera.
inline constexpr double kNearDepth = 1e-6;
inline constexpr double kDiscontinuityThreshold = 0.3;
inline constexpr double kSkyDisparity = 0.08;
inline constexpr double kNearDisparity = 0.4;

/// Pinhole intrinsics with a centered principal point. Pixel (i, j) has its
/// center at continuous coordinate (i + 0.5, j + 0.5).
struct Intrinsics {
  double focal_px = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
};

Intrinsics intrinsics_from_fov(double fov_deg, int width, int height);

/// World-from-camera rigid transform. Camera axes: x right, y down, z forward.
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d forward() const { return rotation.col(2); }
  Eigen::Vector3d position() const { return translation; }

  /// Pose at `position` looking along yaw/pitch (radians) with zero roll.
  /// World up is +y; yaw 0 looks along +z, positive pitch looks up.
  static CameraPose look(const Eigen::Vector3d& position, double yaw, double pitch);
  static CameraPose look_along(const Eigen::Vector3d& position, const Eigen::Vector3d& forward);

  double pitch() const;
  double yaw() const;
  bool is_valid(double tolerance = 1e-6) const;
  bool operator==(const CameraPose& other) const {
    return rotation == other.rotation && translation == other.translation;
  }
};

Eigen::Vector3d unproject_pixel(double u, double v, double disparity, const Intrinsics& K);

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double disparity = 0.0;
  bool in_front = false;
};

PixelProjection project_point(const Eigen::Vector3d& world, const CameraPose& pose, const Intrinsics& K);

/// Result of the mesh warp: `valid` marks pixels covered by a triangle,
/// `missing` marks uncovered pixels plus pixels won by a stretched triangle.
struct MeshProjection {
  RgbdImage image;
  Mask valid;
  Mask missing;

  Mask clean_valid() const { return valid & ~missing; }
};

/// Per-vertex stage of the warp: where each source pixel lands in the
/// destination view.
struct WarpedVertices {
  std::vector<double> u;
  std::vector<double> v;
  std::vector<double> depth;
  std::vector<bool> sky;
};

WarpedVertices transform_vertices(const RgbdImage& src, const CameraPose& src_pose, const CameraPose& dst_pose,
                                  const Intrinsics& K);

/// Mesh-warp `src` from `src_pose` into `dst_pose`. Pixels in `src_invalid`
/// are dropped from the mesh (used when the source is itself a warp).
MeshProjection warp_rgbd(const RgbdImage& src, const CameraPose& src_pose, const CameraPose& dst_pose,
                         const Intrinsics& K, const Mask* src_invalid = nullptr);

/// True where the forward-difference disparity gradient exceeds `threshold`.
Mask discontinuity_mask(std::span<const float> disparity, int width, int height,
                        double threshold = kDiscontinuityThreshold);

struct RegionFractions {
  double sky = 0.0;
  double near = 0.0;
};

RegionFractions region_fractions(std::span<const float> disparity);

}  // namespace flythrough
