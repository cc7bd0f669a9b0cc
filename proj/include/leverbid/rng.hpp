#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace leverbid {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) { return mix64(h ^ mix64(v)); }

/// Derives an independent 64-bit seed from a parent seed and a label.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t label) { return hash_combine(parent, label); }

enum class Channel : std::uint64_t {
  initial_score = 1,
  eligibility = 2,
  ad_click = 3,
  organic_noise = 4,
  rec_click = 5,
};

/// Counter-based random numbers for one simulated window. Every draw is a
/// pure function of (seed, window, channel, indices), so two rollouts that
/// share a seed see identical noise regardless of how many draws each makes.
class WindowStream {
 public:
  WindowStream(std::uint64_t seed, std::uint64_t window) : key_(hash_combine(mix64(seed), window)) {}

  double uniform(Channel ch, std::uint64_t a, std::uint64_t b = 0) const {
    const std::uint64_t h = hash_combine(hash_combine(hash_combine(key_, static_cast<std::uint64_t>(ch)), a), b);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  double normal(Channel ch, std::uint64_t a) const {
    const double u1 = std::max(uniform(ch, a, 0), 0x1.0p-60);
    const double u2 = uniform(ch, a, 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::mt19937_64 engine(Channel ch, std::uint64_t a) const {
    return std::mt19937_64(hash_combine(hash_combine(key_, static_cast<std::uint64_t>(ch)), a));
  }

 private:
  std::uint64_t key_;
};

}  // namespace leverbid
