#ifndef TUBEFIELD_RNG_HPP
#define TUBEFIELD_RNG_HPP

#include <cstdint>
#include <random>

namespace tubefield {

/// Seeded generator with fully specified output streams.
///
/// std::mt19937_64's integer sequence is pinned by the standard, but the
/// distribution adaptors are not, so uniform and normal draws are mapped
/// here by hand (53-bit mantissa scaling, Box-Muller). Same seed, same
/// draw order => identical doubles on any conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; draws two uniforms per pair and caches
  /// the second value.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();  // log(0) guard
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace tubefield

#endif
