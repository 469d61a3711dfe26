#pragma once

#include <cmath>
#include <vector>

#include "fdre/core.hpp"
#include "fdre/stats.hpp"

namespace fdre {

enum class BandwidthRule { Fixed, MedianHeuristic };

struct KernelConfig {
  BandwidthRule bandwidth_rule = BandwidthRule::MedianHeuristic;
  double sigma = 1.0;    // used when bandwidth_rule == Fixed
  double B = 1000.0;     // KMM box bound
  double epsilon = -1.0;  // KMM sum-band half-width; <0 selects (sqrt(n)-1)/sqrt(n)

  void validate() const {
    if (bandwidth_rule == BandwidthRule::Fixed && !(sigma > 0.0))
      throw ConfigError("KernelConfig: fixed sigma must be > 0");
    if (!(B > 0.0)) throw ConfigError("KernelConfig: B must be > 0");
  }
};

// Gaussian kernel k(x,x') = exp(-||x-x'||^2 / (2 sigma^2)).
inline Matrix gaussian_kernel(const Matrix& a, const Matrix& b, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian_kernel: sigma must be > 0");
  const Array an = a.rowwise().squaredNorm();
  const Array bn = b.rowwise().squaredNorm();
  Matrix sq = (-2.0 * a * b.transpose());
  sq.array().colwise() += an;
  sq.array().rowwise() += bn.transpose();
  return (-sq.array().cwiseMax(0.0) / (2.0 * sigma * sigma)).exp();
}

// Median pairwise distance over the pooled rows; rows are thinned to at most
// 512 by even striding to bound the cost.
inline double median_heuristic_bandwidth(const Matrix& a, const Matrix& b) {
  const Eigen::Index cap = 512;
  auto thin = [&](const Matrix& m) {
    if (m.rows() <= cap) return m;
    Matrix out(cap, m.cols());
    for (Eigen::Index i = 0; i < cap; ++i) out.row(i) = m.row(i * m.rows() / cap);
    return out;
  };
  Matrix pooled(thin(a).rows() + thin(b).rows(), a.cols());
  pooled << thin(a), thin(b);

  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(pooled.rows() * (pooled.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < pooled.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j) {
      const double d = (pooled.row(i) - pooled.row(j)).norm();
      if (d > 0.0) dists.push_back(d);
    }
  if (dists.empty()) throw NumericError("median_heuristic_bandwidth: all rows identical");
  return median(std::move(dists));
}

inline double resolve_bandwidth(const KernelConfig& cfg, const Matrix& a, const Matrix& b) {
  cfg.validate();
  return cfg.bandwidth_rule == BandwidthRule::Fixed ? cfg.sigma
                                                    : median_heuristic_bandwidth(a, b);
}

}  // namespace fdre
