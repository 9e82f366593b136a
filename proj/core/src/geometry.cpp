#include "flythrough/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace flythrough {

Intrinsics intrinsics_from_fov(double fov_deg, int width, int height) {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("intrinsics_from_fov: fov must be in (0, 180)");
  if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics_from_fov: image size must be positive");
  Intrinsics K;
  K.width = width;
  K.height = height;
  K.focal_px = (width / 2.0) / std::tan(fov_deg * std::numbers::pi / 360.0);
  K.cx = width / 2.0;
  K.cy = height / 2.0;
  return K;
}

CameraPose CameraPose::look(const Eigen::Vector3d& position, double yaw, double pitch) {
  const Eigen::Vector3d forward(std::sin(yaw) * std::cos(pitch), std::sin(pitch), std::cos(yaw) * std::cos(pitch));
  return look_along(position, forward);
}

CameraPose CameraPose::look_along(const Eigen::Vector3d& position, const Eigen::Vector3d& forward_dir) {
  const Eigen::Vector3d up = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d forward = forward_dir.normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-12) throw std::invalid_argument("CameraPose::look_along: forward is parallel to world up");
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  CameraPose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = position;
  return pose;
}

double CameraPose::pitch() const { return std::asin(std::clamp(forward().y(), -1.0, 1.0)); }

double CameraPose::yaw() const { return std::atan2(forward().x(), forward().z()); }

bool CameraPose::is_valid(double tolerance) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  return (gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tolerance &&
         std::abs(rotation.determinant() - 1.0) <= tolerance;
}

Eigen::Vector3d unproject_pixel(double u, double v, double disparity, const Intrinsics& K) {
  const double z = 1.0 / std::max(disparity, kMinDisparity);
  return {z * (u - K.cx) / K.focal_px, z * (v - K.cy) / K.focal_px, z};
}

PixelProjection project_point(const Eigen::Vector3d& world, const CameraPose& pose, const Intrinsics& K) {
  const Eigen::Vector3d cam = pose.rotation.transpose() * (world - pose.translation);
  PixelProjection out;
  out.in_front = cam.z() > kNearDepth;
  out.u = K.focal_px * cam.x() / cam.z() + K.cx;
  out.v = K.focal_px * cam.y() / cam.z() + K.cy;
  out.disparity = 1.0 / cam.z();
  return out;
}

WarpedVertices transform_vertices(const RgbdImage& src, const CameraPose& src_pose, const CameraPose& dst_pose,
                                  const Intrinsics& K) {
  const Eigen::Matrix3d rel_rotation = dst_pose.rotation.transpose() * src_pose.rotation;
  const Eigen::Vector3d rel_translation = dst_pose.rotation.transpose() * (src_pose.translation - dst_pose.translation);

  const std::size_t n = src.pixel_count();
  WarpedVertices out;
  out.u.resize(n);
  out.v.resize(n);
  out.depth.resize(n);
  out.sky.resize(n);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * src.width + x;
      const double d = src.disparity(i);
      const Eigen::Vector3d p = rel_rotation * unproject_pixel(x + 0.5, y + 0.5, d, K) + rel_translation;
      out.u[i] = K.focal_px * p.x() / p.z() + K.cx;
      out.v[i] = K.focal_px * p.y() / p.z() + K.cy;
      out.depth[i] = p.z();
      out.sky[i] = d <= kMinDisparity;
    }
  }
  return out;
}

namespace {

struct Point2 {
  double x;
  double y;
};

double orient(const Point2& a, const Point2& b, const Point2& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

// Shared edges evaluate bit-identically (up to sign) in both adjacent triangles,
// so the top-left rule yields watertight, non-overlapping coverage.
double edge_function(const Point2& a, const Point2& b, const Point2& p) {
  const bool a_first = a.x < b.x || (a.x == b.x && a.y < b.y);
  return a_first ? orient(a, b, p) : -orient(b, a, p);
}

bool is_top_left(const Point2& a, const Point2& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

bool inside_edge(double e, const Point2& a, const Point2& b, bool mesh_boundary) {
  if (mesh_boundary) {
    // Border edges have no neighbour to claim them, so points within rounding of the edge count as inside.
    return e >= -1e-9 * std::hypot(b.x - a.x, b.y - a.y);
  }
  return e > 0.0 || (e == 0.0 && is_top_left(a, b));
}

constexpr double kWeightSnap = 1e-9;

}  // namespace

MeshProjection warp_rgbd(const RgbdImage& src, const CameraPose& src_pose, const CameraPose& dst_pose,
                         const Intrinsics& K, const Mask* src_invalid) {
  const int w = src.width;
  const int h = src.height;
  if (K.width != w || K.height != h) throw std::invalid_argument("warp_rgbd: intrinsics do not match image size");
  if (src_invalid && (src_invalid->width() != w || src_invalid->height() != h))
    throw std::invalid_argument("warp_rgbd: invalid-source mask shape mismatch");

  const WarpedVertices verts = transform_vertices(src, src_pose, dst_pose, K);
  const std::vector<float> src_disp = src.disparity_map();
  const Mask stretched = discontinuity_mask(src_disp, w, h);
  const Mask src_sky = src.sky ? *src.sky : Mask(w, h, false);

  const std::size_t n = src.pixel_count();
  std::vector<double> zbuffer(n, -std::numeric_limits<double>::infinity());
  std::vector<std::array<double, 5>> attrs(n);  // r, g, b, disparity, sky
  std::vector<std::uint8_t> covered(n, 0);
  std::vector<std::uint8_t> flagged(n, 0);

  auto vertex_disparity = [&](std::size_t i) { return verts.sky[i] ? 0.0 : 1.0 / verts.depth[i]; };
  auto vertex_sky = [&](std::size_t i) { return (src_sky[i] || verts.sky[i]) ? 1.0 : 0.0; };

  // Optional (a, b) pairs name edges that lie on the mesh border.
  auto rasterize = [&](std::size_t i0, std::size_t i1, std::size_t i2, std::array<std::size_t, 4> border) {
    auto on_border = [&](std::size_t a, std::size_t b) {
      return (border[0] == a && border[1] == b) || (border[0] == b && border[1] == a) ||
             (border[2] == a && border[3] == b) || (border[2] == b && border[3] == a);
    };
    std::array<std::size_t, 3> idx{i0, i1, i2};
    for (std::size_t i : idx) {
      if (!(verts.depth[i] > kNearDepth) || !std::isfinite(verts.u[i]) || !std::isfinite(verts.v[i])) return;
      if (src_invalid && (*src_invalid)[i]) return;
    }
    std::array<Point2, 3> p{Point2{verts.u[i0], verts.v[i0]}, Point2{verts.u[i1], verts.v[i1]},
                            Point2{verts.u[i2], verts.v[i2]}};
    const double area = orient(p[0], p[1], p[2]);
    if (area == 0.0 || !std::isfinite(area)) return;
    if (area < 0.0) {
      std::swap(p[1], p[2]);
      std::swap(idx[1], idx[2]);
    }
    const double sky_votes = vertex_sky(idx[0]) + vertex_sky(idx[1]) + vertex_sky(idx[2]);
    const bool tri_flagged =
        stretched[idx[0]] || stretched[idx[1]] || stretched[idx[2]] || (sky_votes > 0.0 && sky_votes < 3.0);
    const bool border0 = on_border(idx[1], idx[2]);
    const bool border1 = on_border(idx[2], idx[0]);
    const bool border2 = on_border(idx[0], idx[1]);

    const double min_u = std::min({p[0].x, p[1].x, p[2].x});
    const double max_u = std::max({p[0].x, p[1].x, p[2].x});
    const double min_v = std::min({p[0].y, p[1].y, p[2].y});
    const double max_v = std::max({p[0].y, p[1].y, p[2].y});
    if (max_u < 0.0 || max_v < 0.0 || min_u > w || min_v > h) return;
    const int x0 = std::max(0, static_cast<int>(std::floor(min_u - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(max_u - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(min_v - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(max_v - 0.5)));

    std::array<double, 3> inv_depth{};
    for (int k = 0; k < 3; ++k) inv_depth[k] = 1.0 / verts.depth[idx[k]];

    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        const Point2 c{px + 0.5, py + 0.5};
        const double e0 = edge_function(p[1], p[2], c);
        const double e1 = edge_function(p[2], p[0], c);
        const double e2 = edge_function(p[0], p[1], c);
        if (!inside_edge(e0, p[1], p[2], border0) || !inside_edge(e1, p[2], p[0], border1) ||
            !inside_edge(e2, p[0], p[1], border2))
          continue;
        const double sum = e0 + e1 + e2;
        if (!(sum > 0.0)) continue;
        std::array<double, 3> wts{e0 / sum, e1 / sum, e2 / sum};
        double renorm = 0.0;
        for (double& wt : wts) {
          if (std::abs(wt) < kWeightSnap) wt = 0.0;
          renorm += wt;
        }
        for (double& wt : wts) wt /= renorm;

        const double geom = wts[0] * inv_depth[0] + wts[1] * inv_depth[1] + wts[2] * inv_depth[2];
        const std::size_t dst = static_cast<std::size_t>(py) * w + px;
        if (!(geom > zbuffer[dst])) continue;
        zbuffer[dst] = geom;
        covered[dst] = 1;
        flagged[dst] = tri_flagged ? 1 : 0;
        auto& a = attrs[dst];
        a = {0.0, 0.0, 0.0, 0.0, 0.0};
        for (int k = 0; k < 3; ++k) {
          if (wts[k] == 0.0) continue;
          const std::size_t v = idx[k];
          for (int ch = 0; ch < 3; ++ch) a[ch] += wts[k] * src.at(v, ch);
          a[3] += wts[k] * vertex_disparity(v);
          a[4] += wts[k] * vertex_sky(v);
        }
      }
    }
  };

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const std::size_t pr = p + 1;
      const std::size_t pd = p + static_cast<std::size_t>(w);
      const std::size_t pdr = pd + 1;
      std::array<std::size_t, 4> top_left{kNone, kNone, kNone, kNone};
      if (y == 0) top_left[0] = p, top_left[1] = pr;
      if (x == 0) top_left[2] = p, top_left[3] = pd;
      std::array<std::size_t, 4> bottom_right{kNone, kNone, kNone, kNone};
      if (x + 2 == w) bottom_right[0] = pr, bottom_right[1] = pdr;
      if (y + 2 == h) bottom_right[2] = pdr, bottom_right[3] = pd;
      rasterize(p, pr, pd, top_left);
      rasterize(pr, pdr, pd, bottom_right);
    }
  }

  MeshProjection out;
  out.image = RgbdImage(w, h);
  out.valid = Mask(w, h, false);
  out.missing = Mask(w, h, false);
  Mask sky(w, h, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (!covered[i]) {
      out.missing.set(i, true);
      continue;
    }
    out.valid.set(i, true);
    out.missing.set(i, flagged[i] != 0);
    for (int ch = 0; ch < 4; ++ch) out.image.at(i, ch) = static_cast<float>(attrs[i][ch]);
    sky.set(i, !flagged[i] && attrs[i][4] >= 0.5);
  }
  out.image.sky = std::move(sky);
  return out;
}

Mask discontinuity_mask(std::span<const float> disparity, int width, int height, double threshold) {
  if (disparity.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("discontinuity_mask: size mismatch");
  Mask out(width, height, false);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const double d = disparity[i];
      const double gx = x + 1 < width ? disparity[i + 1] - d : 0.0;
      const double gy = y + 1 < height ? disparity[i + width] - d : 0.0;
      out.set(i, std::max(std::abs(gx), std::abs(gy)) > threshold);
    }
  }
  return out;
}

RegionFractions region_fractions(std::span<const float> disparity) {
  if (disparity.empty()) return {};
  std::size_t sky = 0;
  std::size_t near = 0;
  for (float d : disparity) {
    sky += d < kSkyDisparity ? 1 : 0;
    near += d > kNearDisparity ? 1 : 0;
  }
  const double n = static_cast<double>(disparity.size());
  return {static_cast<double>(sky) / n, static_cast<double>(near) / n};
}

}  // namespace flythrough
