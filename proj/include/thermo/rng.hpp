#pragma once

#include <cstdint>

namespace thermo {

// splitmix64 is the pinned generator for every stochastic step in the
// toolkit (init, shuffling, augmentation, synthesis). It is tiny, fast and
// trivially reproducible across languages and platforms.
class SplitMix64 {
 public:
  constexpr explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 significant bits.
  constexpr double next_double() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [lo, hi], both inclusive. Drawn by modulo; the bias
  // is below 2^-50 for any range this toolkit uses.
  constexpr std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1u;
    return lo + static_cast<std::int64_t>(next() % span);
  }

  constexpr double next_uniform(double lo, double hi) {
    return lo + next_double() * (hi - lo);
  }

 private:
  std::uint64_t state_;
};

// One mixing step applied to a bare value. Used to derive independent
// per-record and per-image streams from a run seed.
constexpr std::uint64_t splitmix64_mix(std::uint64_t x) {
  return SplitMix64(x).next();
}

}  // namespace thermo
