#pragma once

#include <cstdint>
#include <random>

namespace cecr {

// splitmix64; used to derive independent sub-seeds from one root seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic random stream: mt19937_64 seeded through splitmix64.
// Identical seeds give identical draw sequences on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    engine_.seed(splitmix64(s));
  }

  std::uint64_t seed() const { return seed_; }

  // Child stream with an independent sequence, derived from (seed, tag).
  RngStream split(std::uint64_t tag) const {
    std::uint64_t s = seed_ ^ (0xa0761d6478bd642full * (tag + 1));
    return RngStream(splitmix64(s));
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(engine_);
  }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }

  bool bernoulli(double p) {
    std::bernoulli_distribution d(p);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace cecr
