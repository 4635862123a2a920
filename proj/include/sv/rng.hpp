#pragma once

#include <cstdint>

namespace sv {

// splitmix64. Fixed algorithm so seeded runs reproduce across platforms;
// also usable as a counter-based hash (seed ^ index -> stream).
struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0,1), 53-bit resolution
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // uniform in {0,...,m-1}; m must be > 0. Modulo bias is irrelevant at the
  // sample counts used here.
  std::uint64_t below(std::uint64_t m) { return next() % m; }
};

inline std::uint64_t seed_stream(std::uint64_t seed, std::uint64_t index) {
  SplitMix64 s(seed ^ (index + 0x9e3779b97f4a7c15ULL));
  return s.next();
}

}  // namespace sv
