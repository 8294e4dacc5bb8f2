#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace cogdiag {

// Deterministic generator with explicit draw algorithms. The standard
// distributions are implementation-defined, so every draw here is spelled
// out: results are bit-identical for a given seed on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // splitmix64 warm-up so nearby seeds decorrelate
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Unbiased integer in [0, n) by rejection.
  std::size_t bounded(std::size_t n) {
    if (n <= 1) return 0;
    std::uint64_t bound = n;
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = bounded(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derived stream: independent draws for a named purpose so that adding
  // draws to one component does not shift another's sequence.
  Rng fork(std::uint64_t stream) const {
    std::uint64_t z = state_ ^ (0xd1342543de82ef95ULL * (stream + 1));
    return Rng(z);
  }

 private:
  std::uint64_t state_;
};

}  // namespace cogdiag
