#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace flythrough {

/// Counter-based 64-bit generator. Output i is a bijective mix of (key, i),
/// so streams keyed by different labels never share state and can be
/// re-derived from (seed, label) alone.
class Rng {
 public:
  using result_type = std::uint64_t;

  Rng() = default;
  Rng(std::uint64_t seed, std::string_view stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }
  std::uint64_t next();

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  /// Standard normal (Box-Muller, both variates used).
  double normal();

  /// Independent child stream.
  Rng fork(std::string_view label) const;
  Rng fork(std::uint64_t index) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t key_ = 0x243f6a8885a308d3ull;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_label(std::string_view label);

}  // namespace flythrough
