#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace rpmdp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent per-trial stream seeds derived from one root seed.
inline std::uint64_t derive_stream(std::uint64_t root, std::uint64_t idx) {
  return splitmix64(root + 0x9e3779b97f4a7c15ULL * (idx + 1));
}

// Deterministic RNG. mt19937_64 output is pinned bit-for-bit by the C++
// standard; the <random> distributions are not, so every conversion from raw
// engine output happens here with a fixed formula. Reruns with the same seed
// are bit-identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return double(eng_() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1), safe as a log() argument.
  double uniform01_open() {
    return (double(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Index in [0, n) by cumulative scan. Entries below zero count as zero
  // (callers may pass rows with -1e-9-scale float slack). Exactly one
  // uniform01 draw per call.
  int categorical(const double* w, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += w[i] > 0.0 ? w[i] : 0.0;
    if (!(total > 0.0)) throw std::runtime_error("categorical: nonpositive mass");
    const double u = uniform01() * total;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += w[i] > 0.0 ? w[i] : 0.0;
      if (u < acc) return i;
    }
    return n - 1;  // u landed on accumulated round-off past the last bin
  }

  // Standard normal via Box-Muller. Always two uniform draws per call (the
  // second product value is discarded) so the stream layout does not depend
  // on call history.
  double gaussian() {
    const double u1 = uniform01_open();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace rpmdp
