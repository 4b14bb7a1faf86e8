#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace great {

/// Splittable counter-based generator built on the SplitMix64 mixer.
///
/// A stream is identified by a 64-bit key. Drawing the k-th value of a
/// stream mixes (key + k * GAMMA); forking derives a child key by mixing
/// the parent key with a tag. Identical (key, draw index) pairs produce
/// identical values on every platform, which is what makes datasets and
/// rollouts reproducible no matter how work is split across threads.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : key_(mix(seed ^ kDomain)) {}

  /// Child stream for a numeric tag. Forking never advances this stream.
  SplitRng fork(std::uint64_t tag) const { return SplitRng(mix(key_ ^ mix(tag + kForkSalt)), 0); }

  /// Child stream for a label such as "data" or "rollout".
  SplitRng fork(std::string_view label) const { return fork(fnv1a(label)); }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    double u = uniform();
    while (u == 0.0) u = uniform();
    return u;
  }

  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return lo + static_cast<std::int64_t>(x % span);
  }

  /// Index drawn proportionally to the (nonnegative) weights.
  std::size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  std::uint64_t key() const { return key_; }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  SplitRng(std::uint64_t key, int) : key_(key) {}

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kDomain = 0x47524541544e4554ull;
  static constexpr std::uint64_t kForkSalt = 0xA3EC4F1B6C96A5E7ull;

  static std::uint64_t mix(std::uint64_t z) {
    z += kGamma;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace great
