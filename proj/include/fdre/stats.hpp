#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fdre/core.hpp"

namespace fdre {

inline double mean(const Array& x) { return x.mean(); }

// Population variance (divide by n).
inline double variance(const Array& x) {
  const double m = x.mean();
  return (x - m).square().mean();
}

inline double pearson(const Array& x, const Array& y) {
  const double mx = x.mean(), my = y.mean();
  const Array dx = x - mx, dy = y - my;
  const double denom = std::sqrt(dx.square().sum() * dy.square().sum());
  if (denom == 0.0) throw NumericError("pearson: zero variance input");
  return (dx * dy).sum() / denom;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(Array a, Array b) {
  std::vector<double> xs(a.data(), a.data() + a.size());
  std::vector<double> ys(b.data(), b.data() + b.size());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const double na = static_cast<double>(xs.size());
  const double nb = static_cast<double>(ys.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < xs.size() && j < ys.size()) {
    const double v = std::min(xs[i], ys[j]);
    while (i < xs.size() && xs[i] <= v) ++i;
    while (j < ys.size() && ys[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw NumericError("median: empty input");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid) - 1, v.end());
  return 0.5 * (hi + v[mid - 1]);
}

// log N(x; mean, I) per row.
inline Array gaussian_log_density(const DataMatrix& x, const Vector& mu) {
  const double d = static_cast<double>(x.dim());
  const Array sq = (x.values.rowwise() - mu.transpose()).rowwise().squaredNorm();
  return -0.5 * sq - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

}  // namespace fdre
