#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace diagopt {

// Deterministic random source backing every seeded interface. Distributions
// are built directly on the raw 64-bit stream rather than on
// std::uniform_*_distribution, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() / n * n;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  // b distinct indices drawn from [0, n) by partial Fisher-Yates.
  std::vector<long> distinct(long b, long n) {
    if (b < 1 || b > n) throw std::invalid_argument("Rng::distinct: need 1 <= b <= n");
    std::vector<long> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0L);
    std::vector<long> out(static_cast<std::size_t>(b));
    for (long i = 0; i < b; ++i) {
      const auto j = i + static_cast<long>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      out[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
    }
    return out;
  }

  // Standard normal via Box-Muller on the deterministic uniform stream.
  double normal() {
    double u1 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace diagopt
