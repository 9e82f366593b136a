#include "flythrough/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flythrough {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;

Eigen::Matrix3d rotation_from_yaw_pitch(double yaw, double pitch) {
  return CameraPose::look(Eigen::Vector3d::Zero(), yaw, pitch).rotation;
}
}  // namespace

void AutocruiseParams::validate() const {
  if (!(tau_lerp >= 0.0 && tau_lerp <= 1.0)) throw std::invalid_argument("AutocruiseParams: tau_lerp must be in [0,1]");
  if (!(tau_sky >= 0.0 && tau_sky <= 1.0)) throw std::invalid_argument("AutocruiseParams: tau_sky must be in [0,1]");
  if (!(tau_near >= 0.0 && tau_near <= 1.0)) throw std::invalid_argument("AutocruiseParams: tau_near must be in [0,1]");
  if (!(speed != 0.0 && std::isfinite(speed))) throw std::invalid_argument("AutocruiseParams: speed must be non-zero");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("AutocruiseParams: fov_deg must be in (0,180)");
}

double autocruise_pitch_correction(const RegionFractions& fractions, const AutocruiseParams& params) {
  return kAutocruiseGainDeg * (fractions.sky - params.tau_sky) - kAutocruiseGainDeg * (fractions.near - params.tau_near);
}

Eigen::Matrix3d slerp_rotation(const Eigen::Matrix3d& from, const Eigen::Matrix3d& to, double t) {
  if (t == 0.0 || from == to) return from;
  if (t == 1.0) return to;
  const Eigen::Quaterniond qa(from);
  const Eigen::Quaterniond qb(to);
  return qa.slerp(t, qb).normalized().toRotationMatrix();
}

double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const Eigen::AngleAxisd delta(a.transpose() * b);
  return std::abs(delta.angle());
}

Eigen::Matrix3d autocruise_target_rotation(const CameraPose& current, const RgbdImage& view,
                                           const AutocruiseParams& params) {
  const auto disparity = view.disparity_map();
  const double correction = autocruise_pitch_correction(region_fractions(disparity), params);
  if (correction == 0.0) return current.rotation;
  const double max_pitch = kMaxPitchDeg * kDegToRad;
  const double target_pitch = std::clamp(current.pitch() - correction * kDegToRad, -max_pitch, max_pitch);
  return rotation_from_yaw_pitch(current.yaw(), target_pitch);
}

CameraPose next_pose_autocruise(const CameraPose& current, const RgbdImage& view, const AutocruiseParams& params) {
  params.validate();
  if (!view.all_finite()) throw std::invalid_argument("next_pose_autocruise: view has non-finite values");
  CameraPose next;
  next.rotation = slerp_rotation(current.rotation, autocruise_target_rotation(current, view, params), params.tau_lerp);
  next.translation = current.translation + params.speed * next.rotation.col(2);
  return next;
}

std::vector<CameraPose> generate_path(const CameraPose& start, std::size_t n, const FrameProvider& views,
                                      const AutocruiseParams& params) {
  if (n < 1) throw std::invalid_argument("generate_path: n must be at least 1");
  std::vector<CameraPose> path;
  path.reserve(n);
  path.push_back(start);
  for (std::size_t i = 1; i < n; ++i) {
    const RgbdImage view = views(path.back(), i - 1);
    path.push_back(next_pose_autocruise(path.back(), view, params));
  }
  return path;
}

CameraPose sample_training_pose(const CameraPose& base, const TrainingPoseRange& range,
                                const AutocruiseParams& params, Rng& rng) {
  if (!(range.s >= 0.0)) throw std::invalid_argument("sample_training_pose: s must be non-negative");
  const double u = rng.uniform(-range.s, range.s);
  const double lerp = rng.uniform(0.0, 0.3);
  const double yaw_jitter = rng.uniform(-1.0, 1.0);
  const double pitch_jitter = rng.uniform(-1.0, 1.0);

  const double distance = u * params.speed;
  const double amplitude =
      range.max_angle_deg * kDegToRad * std::min(1.0, std::abs(distance) / kTrainingReferenceDistance);

  CameraPose out;
  out.translation = base.translation + distance * base.forward();
  if (amplitude == 0.0) {
    out.rotation = base.rotation;
    return out;
  }
  const double max_pitch = kMaxPitchDeg * kDegToRad;
  const double target_pitch = std::clamp(base.pitch() + pitch_jitter * amplitude, -max_pitch, max_pitch);
  const Eigen::Matrix3d target = rotation_from_yaw_pitch(base.yaw() + yaw_jitter * amplitude, target_pitch);
  out.rotation = slerp_rotation(base.rotation, target, lerp);
  return out;
}

}  // namespace flythrough
