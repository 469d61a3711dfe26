#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "fdre/core.hpp"

namespace fdre {

// Seedable random source with fixed cross-platform output. The engine is
// std::mt19937_64 (bit-exact by the standard); all distribution transforms
// are implemented here because the standard library's distributions are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n) by rejection, free of modulo bias.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw ConfigError("Rng::uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; the spare value is discarded so the
  // stream consumed per call is fixed.
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gaussian();
    return m;
  }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::vector<Eigen::Index> permutation(Eigen::Index n) {
    std::vector<Eigen::Index> p(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(uniform_int(static_cast<std::uint64_t>(i) + 1));
      std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
    return p;
  }

  // Categorical draw over unnormalized nonnegative weights.
  Eigen::Index categorical(const Array& weights) {
    const double total = weights.sum();
    if (!(total > 0.0)) throw NumericError("Rng::categorical: weights sum to zero");
    double u = uniform() * total;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return weights.size() - 1;
  }

  // Independent stream for retries and per-seed sub-tasks.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fdre
