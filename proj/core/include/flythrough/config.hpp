#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flythrough/diffusion.hpp"
#include "flythrough/dreamer.hpp"
#include "flythrough/training.hpp"
#include "flythrough/trajectory.hpp"
#include "flythrough/unet.hpp"

namespace flythrough {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error("config key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Run configuration. beta_lo / beta_hi are given for 2000 steps and rescaled
/// to t_steps when the schedule is built.
struct Config {
  int resolution = 32;
  int t_steps = 250;
  double beta_lo = 1e-6;
  double beta_hi = 0.01;
  int batch = 8;
  std::int64_t max_steps = 20000;
  double lr = 1e-4;
  int warmup = 500;
  double ema_decay = 0.9999;
  double guidance_w = 1.0;
  double dropout_prob = 0.1;
  double speed = 0.1875;
  double tau_sky = 0.25;
  double tau_near = 0.1;
  double tau_lerp = 0.05;
  double fov_deg = 55.0;
  int anchor_interval = 5;
  int lookahead_interval = 10;
  double lookahead_multiplier = 10.0;
  double s_range = 20.0;
  std::uint64_t seed = 0;
  std::array<int, 3> channels{16, 32, 32};

  void validate() const;

  NoiseSchedule schedule() const;
  UNetConfig unet() const;
  AutocruiseParams autocruise() const;
  OptimizerConfig optimizer() const;
  GuidanceConfig guidance() const;
  DreamerConfig dreamer(DreamerMode mode = DreamerMode::full) const;
  PairSampler pair_sampler() const;

  nlohmann::json to_json() const;
};

/// Keys accepted in config files and overrides.
const std::vector<std::string>& config_keys();

/// Applies the keys of a JSON object; unknown keys and wrong types raise ConfigError.
void apply_config_json(Config& config, const nlohmann::json& object);
/// Applies one "key=value" override; the value is parsed as JSON.
void apply_config_override(Config& config, const std::string& assignment);

/// defaults <- file <- overrides, then validated.
Config load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides = {});

/// FNV-1a over the fields that determine checkpoint compatibility
/// (resolution, schedule, network shape).
std::uint64_t config_hash(const Config& config);

}  // namespace flythrough
