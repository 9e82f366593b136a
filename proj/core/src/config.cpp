#include "flythrough/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace flythrough {

namespace {

using json = nlohmann::json;

struct Field {
  std::function<void(Config&, const json&)> set;
  std::function<json(const Config&)> get;
};

template <typename T>
Field number_field(T Config::*member) {
  return Field{[member](Config& c, const json& v) {
                 if constexpr (std::is_integral_v<T>) {
                   if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
                   if constexpr (std::is_unsigned_v<T>) {
                     if (v.is_number_unsigned()) {
                       c.*member = v.get<T>();
                     } else {
                       const auto s = v.get<std::int64_t>();
                       if (s < 0) throw std::invalid_argument("expected a non-negative integer");
                       c.*member = static_cast<T>(s);
                     }
                   } else {
                     const auto s = v.get<std::int64_t>();
                     if (s < std::numeric_limits<T>::min() || s > std::numeric_limits<T>::max())
                       throw std::invalid_argument("integer out of range");
                     c.*member = static_cast<T>(s);
                   }
                 } else {
                   if (!v.is_number()) throw std::invalid_argument("expected a number");
                   c.*member = v.get<T>();
                 }
               },
               [member](const Config& c) { return json(c.*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["resolution"] = number_field(&Config::resolution);
    t["t_steps"] = number_field(&Config::t_steps);
    t["beta_lo"] = number_field(&Config::beta_lo);
    t["beta_hi"] = number_field(&Config::beta_hi);
    t["batch"] = number_field(&Config::batch);
    t["max_steps"] = number_field(&Config::max_steps);
    t["lr"] = number_field(&Config::lr);
    t["warmup"] = number_field(&Config::warmup);
    t["ema_decay"] = number_field(&Config::ema_decay);
    t["guidance_w"] = number_field(&Config::guidance_w);
    t["dropout_prob"] = number_field(&Config::dropout_prob);
    t["speed"] = number_field(&Config::speed);
    t["tau_sky"] = number_field(&Config::tau_sky);
    t["tau_near"] = number_field(&Config::tau_near);
    t["tau_lerp"] = number_field(&Config::tau_lerp);
    t["fov_deg"] = number_field(&Config::fov_deg);
    t["anchor_interval"] = number_field(&Config::anchor_interval);
    t["lookahead_interval"] = number_field(&Config::lookahead_interval);
    t["lookahead_multiplier"] = number_field(&Config::lookahead_multiplier);
    t["s_range"] = number_field(&Config::s_range);
    t["seed"] = number_field(&Config::seed);
    t["channels"] = Field{[](Config& c, const json& v) {
                            if (!v.is_array() || v.size() != 3) throw std::invalid_argument("expected 3 integers");
                            for (std::size_t i = 0; i < 3; ++i) {
                              if (!v[i].is_number_integer()) throw std::invalid_argument("expected 3 integers");
                              c.channels[i] = v[i].get<int>();
                            }
                          },
                          [](const Config& c) { return json(c.channels); }};
    return t;
  }();
  return table;
}

void require(bool ok, const char* key, const char* message) {
  if (!ok) throw ConfigError(key, message);
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

void Config::validate() const {
  require(resolution >= 8 && resolution % 4 == 0, "resolution", "must be >= 8 and divisible by 4");
  require(t_steps >= 1, "t_steps", "must be >= 1");
  require(beta_lo > 0.0 && std::isfinite(beta_lo), "beta_lo", "must be > 0");
  require(beta_hi >= beta_lo && std::isfinite(beta_hi), "beta_hi", "must be >= beta_lo");
  require(beta_hi * kReferenceSteps / t_steps < 1.0, "beta_hi", "rescaled to t_steps must stay below 1");
  require(batch >= 1, "batch", "must be >= 1");
  require(max_steps >= 0, "max_steps", "must be >= 0");
  require(lr > 0.0 && std::isfinite(lr), "lr", "must be > 0");
  require(warmup >= 0, "warmup", "must be >= 0");
  require(ema_decay >= 0.0 && ema_decay < 1.0, "ema_decay", "must lie in [0, 1)");
  require(guidance_w >= 0.0 && std::isfinite(guidance_w), "guidance_w", "must be >= 0");
  require(in_unit(dropout_prob), "dropout_prob", "must lie in [0, 1]");
  require(speed != 0.0 && std::isfinite(speed), "speed", "must be non-zero");
  require(in_unit(tau_sky), "tau_sky", "must lie in [0, 1]");
  require(in_unit(tau_near), "tau_near", "must lie in [0, 1]");
  require(in_unit(tau_lerp), "tau_lerp", "must lie in [0, 1]");
  require(fov_deg > 0.0 && fov_deg < 180.0, "fov_deg", "must lie in (0, 180)");
  require(anchor_interval >= 1, "anchor_interval", "must be >= 1");
  require(lookahead_interval >= 1, "lookahead_interval", "must be >= 1");
  require(lookahead_multiplier > 1.0 && std::isfinite(lookahead_multiplier), "lookahead_multiplier", "must be > 1");
  require(s_range > 0.0 && std::isfinite(s_range), "s_range", "must be > 0");
  require(channels[0] > 0 && channels[1] > 0 && channels[2] > 0, "channels", "must be positive");
}

NoiseSchedule Config::schedule() const { return make_scaled_schedule(t_steps, beta_lo, beta_hi); }

UNetConfig Config::unet() const {
  UNetConfig u;
  u.channels = channels;
  return u;
}

AutocruiseParams Config::autocruise() const { return AutocruiseParams{tau_sky, tau_near, tau_lerp, speed, fov_deg}; }

OptimizerConfig Config::optimizer() const {
  OptimizerConfig o;
  o.lr = lr;
  o.warmup = warmup;
  o.ema_decay = ema_decay;
  return o;
}

GuidanceConfig Config::guidance() const { return GuidanceConfig{guidance_w, dropout_prob}; }

DreamerConfig Config::dreamer(DreamerMode mode) const {
  DreamerConfig d;
  d.anchor_interval = anchor_interval;
  d.lookahead_interval = lookahead_interval;
  d.lookahead_multiplier = lookahead_multiplier;
  d.mode = mode;
  return d;
}

PairSampler Config::pair_sampler() const {
  PairSampler p;
  p.fov_lo = kTrainFovLo;
  p.fov_hi = kTrainFovHi;
  p.range.s = s_range;
  p.params = autocruise();
  return p;
}

nlohmann::json Config::to_json() const {
  json out = json::object();
  for (const auto& [key, field] : fields()) out[key] = field.get(*this);
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, field] : fields()) k.push_back(key);
    return k;
  }();
  return keys;
}

void apply_config_json(Config& config, const json& object) {
  if (!object.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  for (const auto& [key, value] : object.items()) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError(key, "unknown key");
    try {
      it->second.set(config, value);
    } catch (const std::exception& e) {
      throw ConfigError(key, e.what());
    }
  }
}

void apply_config_override(Config& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must have the form key=value");
  const std::string key = assignment.substr(0, eq);
  const json value = json::parse(assignment.substr(eq + 1), nullptr, false);
  if (value.is_discarded()) throw ConfigError(key, "value is not valid JSON");
  apply_config_json(config, json{{key, value}});
}

Config load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  Config config;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("<file>", "cannot open " + path->string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      const json parsed = json::parse(text, nullptr, false);
      if (parsed.is_discarded()) throw ConfigError("<file>", path->string() + " is not valid JSON");
      apply_config_json(config, parsed);
    }
  }
  for (const auto& o : overrides) apply_config_override(config, o);
  config.validate();
  return config;
}

std::uint64_t config_hash(const Config& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const std::int64_t ints[] = {config.resolution, config.t_steps, config.channels[0], config.channels[1],
                               config.channels[2]};
  const double reals[] = {config.beta_lo, config.beta_hi};
  h = fnv1a(h, ints, sizeof(ints));
  h = fnv1a(h, reals, sizeof(reals));
  return h;
}

}  // namespace flythrough
