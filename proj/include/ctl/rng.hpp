#pragma once

#include <cstdint>

namespace ctl {

// splitmix64 mix; derives independent sub-seeds from one master seed.
// Every RNG stream in a run (env, action, replay, eval, head init) gets
// its own salt so no two streams can collide.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// PCG32 (O'Neill). 16 bytes of state, fully specified output sequence,
// so trajectories replay bit-identically on any platform.
struct Pcg32 {
  std::uint64_t state = 0x853c49e6748fea9bULL;
  std::uint64_t inc = 0xda3e39cb94b95bdbULL;

  static Pcg32 seeded(std::uint64_t seed, std::uint64_t stream = 0) {
    Pcg32 g;
    g.state = 0;
    g.inc = (stream << 1) | 1u;
    g.next();
    g.state += seed;
    g.next();
    return g;
  }

  std::uint32_t next() {
    const std::uint64_t old = state;
    state = old * 6364136223846793005ULL + inc;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18) ^ old) >> 27);
    const auto rot = static_cast<std::uint32_t>(old >> 59);
    return (xorshifted >> rot) | (xorshifted << ((32 - rot) & 31));
  }

  // Unbiased draw in [0, bound) via threshold rejection.
  std::uint32_t below(std::uint32_t bound) {
    const std::uint32_t threshold = (0u - bound) % bound;
    for (;;) {
      const std::uint32_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  // Inclusive integer range.
  int range(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<std::uint32_t>(hi - lo + 1)));
  }

  // [0, 1) with 24 bits of mantissa.
  float uniform() { return static_cast<float>(next() >> 8) * 0x1p-24f; }

  friend bool operator==(const Pcg32&, const Pcg32&) = default;
};

}  // namespace ctl
