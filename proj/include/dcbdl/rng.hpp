#pragma once

#include <cmath>
#include <cstdint>

namespace dcbdl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Counter-based generator: draw k of stream s under seed q is a pure function
// of (q, s, k). Streams can be handed to parallel consumers and replayed
// independently; results are identical on every platform.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(splitmix64(seed ^ 0x5851f42d4c957f2dull)) {}

  CounterRng stream(std::uint64_t id) const {
    CounterRng r(0);
    r.key_ = splitmix64(key_ ^ splitmix64(id + 0x9e3779b97f4a7c15ull));
    return r;
  }

  std::uint64_t next_u64() { return splitmix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ull); }

  // uniform on (0,1), 53-bit resolution, never exactly 0 or 1
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // uniform clamped to [eps, 1-eps]
  double uniform_clamped(double eps) {
    double u = uniform();
    if (u < eps) return eps;
    if (u > 1.0 - eps) return 1.0 - eps;
    return u;
  }

  // standard normal via Box-Muller (two draws per call, no cached state)
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dcbdl
