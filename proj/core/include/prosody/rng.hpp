#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace prosody {

/// splitmix64 mixing step; used to derive per-utterance seeds from a master
/// seed so generation order never matters.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return mix64(seed ^ mix64(v));
}

/// Deterministic RNG wrapper. All draws go through explicit formulas rather
/// than std::uniform_*_distribution, whose algorithms are
/// implementation-defined; output is identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    // 128-bit multiply avoids modulo bias.
    unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * range;
    return lo + static_cast<int>(wide >> 64);
  }

  /// Uniform real in [0, 1).
  double uniform() { return std::ldexp(static_cast<double>(next_u64() >> 11), -53); }

  /// Uniform real in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call; the pair's second
  /// half is cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace prosody
