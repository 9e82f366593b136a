#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "flythrough/geometry.hpp"
#include "flythrough/image.hpp"
#include "flythrough/rng.hpp"

namespace flythrough {

struct AutocruiseParams {
  double tau_sky = 0.25;
  double tau_near = 0.1;
  double tau_lerp = 0.05;
  /// Scene units per step; negative values fly backwards out of the image.
  double speed = 0.1875;
  double fov_deg = 55.0;

  void validate() const;
};

struct TrainingPoseRange {
  /// Maximum step magnitude, in multiples of the base camera speed.
  double s = 20.0;
  /// Peak yaw/pitch of the random rotation target, reached at a full-range step.
  double max_angle_deg = 15.0;
};

/// Pitch gain of the autocruise controller, degrees per unit of fraction error.
inline constexpr double kAutocruiseGainDeg = 30.0;
inline constexpr double kMaxPitchDeg = 45.0;
/// Full-range training step used to scale rotation jitter (20 steps at 0.1875).
inline constexpr double kTrainingReferenceDistance = 3.75;

/// Pitch correction in degrees; positive values tilt the camera down.
double autocruise_pitch_correction(const RegionFractions& fractions, const AutocruiseParams& params);

/// Orientation the controller steers towards from `current` given the view.
Eigen::Matrix3d autocruise_target_rotation(const CameraPose& current, const RgbdImage& view,
                                           const AutocruiseParams& params);

CameraPose next_pose_autocruise(const CameraPose& current, const RgbdImage& view, const AutocruiseParams& params);

/// Supplies the frame seen at `pose` (the `index`-th pose of the path).
using FrameProvider = std::function<RgbdImage(const CameraPose& pose, std::size_t index)>;

std::vector<CameraPose> generate_path(const CameraPose& start, std::size_t n, const FrameProvider& views,
                                      const AutocruiseParams& params);

CameraPose sample_training_pose(const CameraPose& base, const TrainingPoseRange& range,
                                const AutocruiseParams& params, Rng& rng);

/// Slerp between rotations; t = 0 returns `from` bit-exactly.
Eigen::Matrix3d slerp_rotation(const Eigen::Matrix3d& from, const Eigen::Matrix3d& to, double t);

double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

}  // namespace flythrough
