#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace smpc {

/// splitmix64 step; used both as a generator and as a seed mixer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a decorrelated stream seed from (base, tag, index). Streams with
/// different tags or indices never share draws, so offline sampling and
/// online plant disturbances stay independent.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t index) {
  std::uint64_t s = base;
  std::uint64_t a = splitmix64(s);
  s = a ^ (tag * 0x9e3779b97f4a7c15ULL);
  std::uint64_t b = splitmix64(s);
  s = b ^ (index * 0xd1342543de82ef95ULL);
  return splitmix64(s);
}

/// Deterministic RNG with a fixed in-repo algorithm so that identical seeds
/// produce identical artifacts regardless of the standard library.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // burn a couple of outputs so nearby seeds decorrelate
    splitmix64(state_);
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi]; returns lo when the interval is degenerate.
  double uniform(double lo, double hi) {
    if (hi <= lo) return lo;
    return lo + (hi - lo) * uniform01();
  }

  /// Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  std::uint64_t state_;
};

}  // namespace smpc
