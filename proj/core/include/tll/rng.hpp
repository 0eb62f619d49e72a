#pragma once
// Counter-seeded xoshiro256** with explicit floating-point transforms.
// Standard-library distributions are implementation-defined, which would break
// the bit-identical-reproducibility contract, so the few transforms needed are
// spelled out here.

#include <cmath>
#include <cstdint>

namespace tll::rng {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Xoshiro256ss {
public:
  explicit Xoshiro256ss(std::uint64_t seed = 0) {
    // splitmix-expanded state; never all-zero
    for (auto& w : s_) w = splitmix64(seed);
  }

  std::uint64_t operator()() {
    auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

private:
  std::uint64_t s_[4];
};

// Independent substream for task `stream` of run `seed`. Tasks (trajectories,
// disorder realizations, bootstrap replicas) each get their own generator so
// results do not depend on scheduling order.
inline Xoshiro256ss substream(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t mix = seed;
  (void)splitmix64(mix);
  mix ^= 0x51f15ab1u + stream * 0x2545f4914f6cdd1dull;
  return Xoshiro256ss(mix);
}

// uniform on [0,1), 53-bit
inline double uniform01(Xoshiro256ss& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// uniform on [lo,hi)
inline double uniform(Xoshiro256ss& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// integer in [0, n)
inline std::uint64_t uniform_index(Xoshiro256ss& g, std::uint64_t n) {
  // modulo bias is < 2^-40 for every n used here (n << 2^24)
  return g() % n;
}

inline double exponential(Xoshiro256ss& g, double rate) {
  return -std::log1p(-uniform01(g)) / rate;
}

inline bool bernoulli(Xoshiro256ss& g, double p) { return uniform01(g) < p; }

}  // namespace tll::rng
