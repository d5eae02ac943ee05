#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace phenotyper {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Splittable counter-based generator (SplitMix64 core). child() derives a
// stream whose draws are independent of the parent's, so components can be
// given their own streams and adding draws in one never shifts another.
// All distribution code is hand-rolled on top of next_u64() to keep output
// identical across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(splitmix64(seed ^ 0x6A09E667F3BCC909ULL)), counter_(0) {}

  Rng child(std::uint64_t index) const {
    Rng r(0);
    r.key_ = splitmix64(key_ + 0x9E3779B97F4A7C15ULL * (index + 1));
    r.counter_ = 0;
    r.has_spare_ = false;
    return r;
  }
  Rng child(std::string_view label) const { return child(fnv1a64(label)); }

  std::uint64_t next_u64() { return splitmix64(key_ + 0xD1B54A32D192ED03ULL * ++counter_); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer on [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t r = next_u64();
    while (r > limit) r = next_u64();
    return r % n;
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace phenotyper
