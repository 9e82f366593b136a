#include "flythrough/dreamer.hpp"

#include <stdexcept>

#include "flythrough/synthdata.hpp"

namespace flythrough {

std::string_view to_string(DreamerMode mode) {
  switch (mode) {
    case DreamerMode::full: return "full";
    case DreamerMode::no_anchor: return "no-anchor";
    case DreamerMode::no_lookahead: return "no-lookahead";
    case DreamerMode::naive: return "naive";
  }
  return "full";
}

DreamerMode parse_dreamer_mode(std::string_view text) {
  if (text == "full") return DreamerMode::full;
  if (text == "no-anchor" || text == "no_anchor") return DreamerMode::no_anchor;
  if (text == "no-lookahead" || text == "no_lookahead") return DreamerMode::no_lookahead;
  if (text == "naive") return DreamerMode::naive;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "'");
}

void DreamerConfig::validate() const {
  if (anchor_interval < 1) throw std::invalid_argument("anchor_interval must be >= 1");
  if (lookahead_interval < 1) throw std::invalid_argument("lookahead_interval must be >= 1");
  if (!(lookahead_multiplier > 1.0)) throw std::invalid_argument("lookahead_multiplier must be > 1");
  if (!(lookahead_tau_lerp >= 0.0 && lookahead_tau_lerp <= 1.0))
    throw std::invalid_argument("lookahead_tau_lerp must lie in [0, 1]");
}

Conditioning make_masked_conditioning(const RgbdImage& image, const Mask& mask, ConditioningSource source) {
  return Conditioning{to_network_space(image), mask_channel(mask), source};
}

Conditioning make_unmasked_conditioning(const MeshProjection& warp, ConditioningSource source) {
  Conditioning c{to_network_space(warp.image), Tensor<float>(1, warp.image.height, warp.image.width), source};
  const std::size_t hw = c.image.plane();
  for (int ch = 0; ch < c.image.channels; ++ch) {
    float* dst = c.image.channel(ch);
    for (std::size_t i = 0; i < hw; ++i)
      if (!warp.valid[i]) dst[i] = 0.0f;
  }
  return c;
}

std::array<double, 3> ConditioningSet::weights() const {
  std::array<double, 3> w{kSourceWeights[0], anchored ? kSourceWeights[1] : 0.0, lookahead ? kSourceWeights[2] : 0.0};
  const double total = w[0] + w[1] + w[2];
  for (auto& v : w) v /= total;
  return w;
}

const Conditioning& ConditioningSet::choose(Rng& rng) const {
  const auto w = weights();
  const double u = rng.uniform();
  if (u < w[0]) return warped_prev;
  if (anchored && u < w[0] + w[1]) return *anchored;
  if (lookahead) return *lookahead;
  return anchored ? *anchored : warped_prev;
}

bool refresh_anchor(AnchorState& state, int frame_index, const RgbdImage& frame, const CameraPose& pose,
                    const DreamerConfig& config) {
  if (frame_index < 0) throw std::invalid_argument("refresh_anchor: negative frame index");
  if (frame_index % config.anchor_interval != 0) return false;
  state.frame = frame;
  state.pose = pose;
  state.frame_index = frame_index;
  return true;
}

CameraPose lookahead_pose(const CameraPose& pose, const RgbdImage& current, const AutocruiseParams& autocruise,
                          const DreamerConfig& config) {
  AutocruiseParams far = autocruise;
  far.tau_lerp = config.lookahead_tau_lerp;
  far.speed = autocruise.speed * config.lookahead_multiplier;
  return next_pose_autocruise(pose, current, far);
}

namespace {

RgbdImage refine_warp(const MeshProjection& warp, DenoiserModel& model, const NoiseSchedule& schedule,
                      const GuidanceConfig& guidance, const ConditioningSet& set, FrameProvenance* record, Rng& rng) {
  const Mask ground = ~warp.image.sky_or_empty();
  ConditionProvider provider = [&](Rng& r) -> const Conditioning& {
    const Conditioning& c = set.choose(r);
    if (record) {
      record->draws.push_back(kSourceCodes[static_cast<std::size_t>(c.source)]);
      ++record->counts[static_cast<std::size_t>(c.source)];
    }
    return c;
  };
  return sample_refine(model, provider, schedule, guidance, ground, warp.image, rng);
}

}  // namespace

LookaheadView make_lookahead(const RgbdImage& current, const CameraPose& pose, DenoiserModel& model,
                             const NoiseSchedule& schedule, const GuidanceConfig& guidance,
                             const AutocruiseParams& autocruise, const DreamerConfig& config, Rng& rng) {
  LookaheadView out;
  out.pose = lookahead_pose(pose, current, autocruise, config);
  const Intrinsics K = intrinsics_from_fov(autocruise.fov_deg, current.width, current.height);
  const MeshProjection warp = warp_rgbd(current, pose, out.pose, K);
  out.missing_fraction = warp.missing.fraction();

  Rng fill_rng = rng.fork("fill");
  ConditioningSet set;
  set.warped_prev = make_masked_conditioning(fill_missing_with_noise(warp.image, warp.missing, fill_rng), warp.missing,
                                             kWarpedPrev);
  Rng sample_rng = rng.fork("sample");
  out.image = refine_warp(warp, model, schedule, guidance, set, nullptr, sample_rng);
  return out;
}

Sequence extrapolate_sequence(const RgbdImage& input, const CameraPose& start, int n, DenoiserModel& model,
                              const NoiseSchedule& schedule, const GuidanceConfig& guidance,
                              const AutocruiseParams& autocruise, const DreamerConfig& config, Rng& rng) {
  if (n < 1) throw std::invalid_argument("extrapolate_sequence: n must be >= 1");
  if (schedule.steps != model.meta.timesteps)
    throw std::invalid_argument("extrapolate_sequence: schedule length does not match the model");
  if (input.width != model.meta.resolution || input.height != model.meta.resolution)
    throw std::invalid_argument("extrapolate_sequence: input resolution does not match the model");
  autocruise.validate();
  config.validate();

  const Intrinsics K = intrinsics_from_fov(autocruise.fov_deg, input.width, input.height);
  Sequence seq;
  seq.provenance.mode = config.mode;
  seq.frames.push_back(input);
  seq.poses.push_back(start);

  AnchorState anchor;
  std::optional<LookaheadView> lookahead;
  int lookahead_frame = -1;

  for (int i = 0; i + 1 < n; ++i) {
    const RgbdImage& frame = seq.frames[static_cast<std::size_t>(i)];
    const CameraPose pose = seq.poses[static_cast<std::size_t>(i)];
    const Rng frame_rng = rng.fork(static_cast<std::uint64_t>(i));

    if (config.uses_anchor() && refresh_anchor(anchor, i, frame, pose, config))
      seq.provenance.anchor_refresh.push_back(i);
    if (config.uses_lookahead() && i % config.lookahead_interval == 0) {
      Rng la_rng = frame_rng.fork("lookahead");
      lookahead = make_lookahead(frame, pose, model, schedule, guidance, autocruise, config, la_rng);
      lookahead_frame = i;
      seq.provenance.lookahead_rebuild.push_back(i);
      seq.provenance.lookahead_poses.push_back(lookahead->pose);
    }

    const CameraPose next = next_pose_autocruise(pose, frame, autocruise);
    const MeshProjection warp = warp_rgbd(frame, pose, next, K);

    FrameProvenance record;
    record.index = i + 1;
    record.warped_missing_fraction = warp.missing.fraction();

    ConditioningSet set;
    if (config.mode == DreamerMode::naive) {
      set.warped_prev = make_masked_conditioning(warp.image, warp.missing, kWarpedPrev);
    } else {
      Rng fill_rng = frame_rng.fork("fill");
      set.warped_prev = make_masked_conditioning(fill_missing_with_noise(warp.image, warp.missing, fill_rng),
                                                 warp.missing, kWarpedPrev);
    }
    if (config.uses_anchor()) {
      set.anchored = make_unmasked_conditioning(warp_rgbd(anchor.frame, anchor.pose, next, K), kAnchored);
      record.anchor_frame = anchor.frame_index;
    }
    if (config.uses_lookahead() && lookahead) {
      const MeshProjection back = warp_rgbd(lookahead->image, lookahead->pose, next, K);
      record.lookahead_missing_fraction = back.missing.fraction();
      if (record.lookahead_missing_fraction > config.max_lookahead_missing) {
        record.lookahead_dropped = true;
      } else {
        set.lookahead = make_unmasked_conditioning(back, kLookahead);
        record.lookahead_frame = lookahead_frame;
      }
    }

    Rng sample_rng = frame_rng.fork("sample");
    RgbdImage refined = refine_warp(warp, model, schedule, guidance, set, &record, sample_rng);
    seq.frames.push_back(std::move(refined));
    seq.poses.push_back(next);
    seq.provenance.frames.push_back(std::move(record));
  }
  return seq;
}

}  // namespace flythrough
