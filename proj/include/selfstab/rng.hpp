#pragma once

#include <cstdint>

namespace selfstab {

// SplitMix64 finalizer; basis for all derived streams.
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

// Purpose tags keep sub-streams for unrelated draws disjoint.
enum class Draw : uint64_t {
  Graph = 1,
  Ids = 2,
  Init = 3,
  Scheduler = 4,
  Rule = 5,
  Deviation = 6,
  Fault = 7,
  Game = 8,
  Oracle = 9,
};

constexpr uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t k = mix64(seed);
  k = mix64(k ^ mix64(a));
  k = mix64(k ^ mix64(b));
  k = mix64(k ^ mix64(c));
  return k;
}

// Counter-based stream: the i-th draw is a pure function of (seed, a, b, c, i),
// so draws do not depend on evaluation order elsewhere in the program.
class RngStream {
 public:
  explicit RngStream(uint64_t seed, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0)
      : key_(derive_seed(seed, a, b, c)) {}

  RngStream(uint64_t seed, uint64_t a, uint64_t b, Draw purpose)
      : RngStream(seed, a, b, static_cast<uint64_t>(purpose)) {}

  uint64_t next() { return mix64(key_ ^ ++counter_); }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
  }

  // Unbiased integer in [0, n); n > 0.
  uint64_t below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

 private:
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace selfstab
