#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace imave {

// splitmix64 step; used both as a generator seeder and as a stable hash for
// deriving independent per-cell streams from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic stream id from a master seed and any number of index parts.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = splitmix64(seed);
  for (std::uint64_t p : parts) s = splitmix64(s ^ (p + 0x9e3779b97f4a7c15ULL));
  return s;
}

// mt19937_64 wrapper with hand-rolled uniform/normal draws so that sampled
// sequences are identical across standard libraries (std::normal_distribution
// is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Marsaglia polar; caches the second deviate.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  // +1 with probability p, else -1.
  int sign_bernoulli(double p) { return uniform() < p ? 1 : -1; }

  std::uint64_t next_u64() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace imave
