#pragma once

#include <cmath>
#include <cstdint>

namespace manyiv {

// SplitMix64 (Steele, Lea, Flood 2014). Chosen over std::mt19937_64 because the
// whole generator is a dozen lines we control: identical streams on every
// platform and compiler, which the reproducibility guarantees depend on.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform on (0, 1]: top 53 bits, shifted away from zero so log() is safe.
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Box-Muller pair, second value cached.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stream seed for replication r: the SplitMix64 output function applied to
// seed + (r+1) * golden gamma. Distinct replications get decorrelated streams
// regardless of evaluation order, which keeps concurrent runs bit-reproducible.
inline std::uint64_t mix64(std::uint64_t seed, std::uint64_t r) {
  std::uint64_t z = seed + (r + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Tags for design-level sub-streams (drawn once per design, not per rep).
enum : std::uint64_t {
  kStreamControls = 0x1000000001ull,
  kStreamInstruments = 0x1000000002ull,
  kStreamCoefficients = 0x1000000003ull,
  kStreamWeights = 0x1000000004ull,
  kStreamRedraw = 0x1000000005ull,
};

}  // namespace manyiv
