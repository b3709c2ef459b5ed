#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace pimforge {

// Deterministic splitmix64 stream. The <random> distributions are
// implementation-defined, which would make seeded artifacts differ across
// toolchains, so every draw is derived from raw 64-bit outputs only.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1) with 53 significant bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n); n must be positive
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925287 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Independent child stream; used to keep module seeds decoupled.
  Rng fork(std::uint64_t stream) const {
    Rng child(state_ ^ (0x632be59bd9b4e019ULL + stream * 0x9e3779b97f4a7c15ULL));
    child.next_u64();
    return child;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// In-place Fisher-Yates; stable across platforms unlike std::shuffle.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.index(i)]);
  }
}

}  // namespace pimforge
