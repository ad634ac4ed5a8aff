#pragma once

#include <cmath>
#include <cstdint>

namespace qp {

// SplitMix64 (Steele/Lea/Flood). Project-wide RNG: the stream is defined by
// 64-bit integer arithmetic only, so every seeded statistic is bit-identical
// across platforms and compilers.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0,1); never hits an endpoint, safe under log().
  double next_open01() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * next_open01();
  }

 private:
  std::uint64_t state_;
};

// Substream convention: per-run seed is master_seed XOR run_index, fed to
// SplitMix64 (whose finalizer decorrelates adjacent seeds).
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return master ^ index;
}

// Standard normals: Box-Muller over SplitMix64 uniforms, generated in pairs.
// Each pair consumes exactly two engine draws (u1 then u2) and yields
// r*cos(2*pi*u2) first, r*sin(2*pi*u2) second.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) noexcept : rng_(seed) {}

  double next() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = rng_.next_open01();
    const double u2 = rng_.next_open01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.2831853071795864769 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  SplitMix64& engine() noexcept { return rng_; }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace qp
