#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace nugr {

// splitmix64. Every seeded quantity in the library is drawn from this
// generator so outputs are reproducible across platforms and standard
// library implementations (std::uniform_real_distribution is not).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) { return next() % n; }

  // Approximately standard normal (Box-Muller on two unit draws).
  double normal();

 private:
  std::uint64_t state_;
};

inline double SplitMix64::normal() {
  double u1 = unit();
  const double u2 = unit();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// FNV-1a, used to derive independent sub-seeds from a base seed and a tag.
inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  SplitMix64 g(seed ^ hash_tag(tag));
  return g.next();
}

}  // namespace nugr
