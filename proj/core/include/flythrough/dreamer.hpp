#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flythrough/diffusion.hpp"
#include "flythrough/geometry.hpp"
#include "flythrough/trajectory.hpp"

namespace flythrough {

enum class DreamerMode { full, no_anchor, no_lookahead, naive };

std::string_view to_string(DreamerMode mode);
/// Accepts "full", "no-anchor", "no-lookahead", "naive" (underscores also accepted).
DreamerMode parse_dreamer_mode(std::string_view text);

struct DreamerConfig {
  int anchor_interval = 5;
  int lookahead_interval = 10;
  double lookahead_multiplier = 10.0;
  double lookahead_tau_lerp = 0.3;
  /// The lookahead source is dropped for a frame when its warp misses more than this.
  double max_lookahead_missing = 0.9;
  DreamerMode mode = DreamerMode::full;

  bool uses_anchor() const { return mode == DreamerMode::full || mode == DreamerMode::no_lookahead; }
  bool uses_lookahead() const { return mode == DreamerMode::full || mode == DreamerMode::no_anchor; }
  void validate() const;
};

enum ConditioningSource : int { kWarpedPrev = 0, kAnchored = 1, kLookahead = 2 };
inline constexpr std::array<double, 3> kSourceWeights{0.5, 0.25, 0.25};
inline constexpr std::array<char, 3> kSourceCodes{'w', 'a', 'l'};

/// Conditioning in network space with its missing mask.
Conditioning make_masked_conditioning(const RgbdImage& image, const Mask& mask, ConditioningSource source);
/// Mask-free conditioning from a warp. Uncovered pixels are set to 0 in
/// network space, the value the unconditional branch sees.
Conditioning make_unmasked_conditioning(const MeshProjection& warp, ConditioningSource source);

/// Candidate conditioning views for one frame; warped_prev is mandatory.
struct ConditioningSet {
  Conditioning warped_prev;
  std::optional<Conditioning> anchored;
  std::optional<Conditioning> lookahead;

  /// Source weights renormalized over the present entries.
  std::array<double, 3> weights() const;
  /// Categorical draw; consumes exactly one uniform variate.
  const Conditioning& choose(Rng& rng) const;
};

struct AnchorState {
  RgbdImage frame;
  CameraPose pose;
  int frame_index = -1;
};

/// Replaces the anchor with (frame, pose) when frame_index is a multiple of
/// the anchor interval. Returns whether it did.
bool refresh_anchor(AnchorState& state, int frame_index, const RgbdImage& frame, const CameraPose& pose,
                    const DreamerConfig& config);

struct LookaheadView {
  RgbdImage image;
  CameraPose pose;
  double missing_fraction = 0.0;
};

/// One enlarged autocruise step ahead of `pose`, then refined from that warp alone.
CameraPose lookahead_pose(const CameraPose& pose, const RgbdImage& current, const AutocruiseParams& autocruise,
                          const DreamerConfig& config);

LookaheadView make_lookahead(const RgbdImage& current, const CameraPose& pose, DenoiserModel& model,
                             const NoiseSchedule& schedule, const GuidanceConfig& guidance,
                             const AutocruiseParams& autocruise, const DreamerConfig& config, Rng& rng);

struct FrameProvenance {
  int index = 0;
  std::string draws;
  std::array<int, 3> counts{0, 0, 0};
  int anchor_frame = -1;
  int lookahead_frame = -1;
  bool lookahead_dropped = false;
  double warped_missing_fraction = 0.0;
  double lookahead_missing_fraction = 0.0;
};

struct Provenance {
  DreamerMode mode = DreamerMode::full;
  std::uint64_t seed = 0;
  std::vector<int> anchor_refresh;
  std::vector<int> lookahead_rebuild;
  std::vector<CameraPose> lookahead_poses;
  std::vector<FrameProvenance> frames;
};

struct Sequence {
  std::vector<RgbdImage> frames;
  std::vector<CameraPose> poses;
  Provenance provenance;
};

/// Render-refine-repeat from a single RGBD frame. Frame 0 is `input` unchanged.
Sequence extrapolate_sequence(const RgbdImage& input, const CameraPose& start, int n, DenoiserModel& model,
                              const NoiseSchedule& schedule, const GuidanceConfig& guidance,
                              const AutocruiseParams& autocruise, const DreamerConfig& config, Rng& rng);

}  // namespace flythrough
