#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rg {

// Standard normals via Box-Muller over mt19937_64.  The transform is spelled
// out (rather than std::normal_distribution) so seeded runs produce identical
// streams on every standard library.
struct NormalRng {
  std::mt19937_64 gen;
  double spare = 0.0;
  bool has_spare = false;

  explicit NormalRng(std::uint64_t seed) : gen(seed) {}

  double uniform() {
    // 53-bit uniform in (0,1]
    return (static_cast<double>(gen() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare) {
      has_spare = false;
      return spare;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare = r * std::sin(a);
    has_spare = true;
    return r * std::cos(a);
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent per-path seed derived from the run seed and the path index.
inline std::uint64_t path_seed(std::uint64_t seed, std::int64_t path) {
  return splitmix64(seed ^ splitmix64(0x9E3779B97F4A7C15ull * (path + 1)));
}

}  // namespace rg
