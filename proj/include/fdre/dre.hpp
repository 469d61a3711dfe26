#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "fdre/core.hpp"
#include "fdre/kernel.hpp"
#include "fdre/mlp.hpp"
#include "fdre/optim.hpp"
#include "fdre/random.hpp"

namespace fdre {

enum class DreKind { Classifier, Kliep, KmmTransductive };

struct ClassifierConfig {
  std::vector<Eigen::Index> hidden_sizes;  // empty = logistic regression
  long epochs = 10;
  Eigen::Index batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("ClassifierConfig: learning_rate must be > 0");
    if (epochs < 0 || batch_size < 1) throw ConfigError("ClassifierConfig: bad schedule");
  }
};

// A fitted density ratio estimator. Classifier and KLIEP kinds answer
// log r(x) at arbitrary points; the KMM kind is transductive and answers
// only at the source rows it was fitted on.
struct RatioEstimator {
  DreKind kind = DreKind::Classifier;

  // classifier
  Mlp net;
  double prior_correction = 0.0;  // log(n_q / n_p)

  // kliep
  Matrix centers;  // C x d
  Vector theta;    // C, nonnegative
  double bandwidth = 1.0;

  // kmm (bandwidth shared with kliep field)
  Matrix source_rows;  // n_s x d
  Vector beta;         // n_s, in [0, B]
  double kmm_B = 0.0;
  double kmm_epsilon = 0.0;
  double kmm_objective = std::numeric_limits<double>::quiet_NaN();
  bool kmm_converged = true;

  Array log_ratio(const DataMatrix& x) const {
    x.validate("log_ratio input");
    switch (kind) {
      case DreKind::Classifier: {
        if (x.dim() != net.in_dim())
          throw ConfigError("log_ratio: input dim does not match classifier");
        return net.forward(x.values).col(0).array() + prior_correction;
      }
      case DreKind::Kliep: {
        if (x.dim() != centers.cols())
          throw ConfigError("log_ratio: input dim does not match KLIEP centers");
        const Array r = (gaussian_kernel(x.values, centers, bandwidth) * theta).array();
        return r.cwiseMax(std::numeric_limits<double>::min()).log();
      }
      case DreKind::KmmTransductive: {
        if (x.dim() != source_rows.cols())
          throw ConfigError("log_ratio: input dim does not match KMM source rows");
        Array out(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          const auto it = row_index().find(row_key(x.values.row(i)));
          if (it == row_index().end())
            throw QueryError("log_ratio: kmm-transductive estimator queried off its "
                             "fitted source rows (row " + std::to_string(i) + ")");
          out[i] = std::log(std::max(beta[it->second], std::numeric_limits<double>::min()));
        }
        return out;
      }
    }
    throw Error("log_ratio: unknown estimator kind");
  }

  Array ratio(const DataMatrix& x) const { return log_ratio(x).exp(); }

 private:
  static std::string row_key(const Eigen::RowVectorXd& row) {
    std::string key(static_cast<std::size_t>(row.size()) * sizeof(double), '\0');
    std::memcpy(key.data(), row.data(), key.size());
    return key;
  }

  const std::unordered_map<std::string, Eigen::Index>& row_index() const {
    if (row_index_.empty() && source_rows.rows() > 0) {
      for (Eigen::Index i = 0; i < source_rows.rows(); ++i)
        row_index_.emplace(row_key(source_rows.row(i)), i);
    }
    return row_index_;
  }

  mutable std::unordered_map<std::string, Eigen::Index> row_index_;
};

// Probabilistic-classification DRE: a p-vs-q classifier trained with binary
// cross entropy; log r(x) is its logit plus the class-prior correction
// log(n_q/n_p).
inline RatioEstimator fit_classifier(const DataMatrix& dp, const DataMatrix& dq,
                                     const ClassifierConfig& cfg) {
  dp.validate("fit_classifier dp");
  dq.validate("fit_classifier dq");
  cfg.validate();
  if (dp.dim() != dq.dim()) throw ConfigError("fit_classifier: dimension mismatch");

  const Eigen::Index n = dp.rows() + dq.rows();
  Matrix x(n, dp.dim());
  x << dp.values, dq.values;
  Array y(n);
  y.head(dp.rows()).setOnes();
  y.tail(dq.rows()).setZero();

  Rng rng(cfg.seed);
  Mlp net(dp.dim(), cfg.hidden_sizes, 1, rng);
  AdamW opt(cfg.learning_rate, cfg.weight_decay);
  auto params = net.params();

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;

  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = idx.size(); i-- > 1;) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(i + 1));
      std::swap(idx[i], idx[j]);
    }
    for (std::size_t start = 0; start < idx.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Matrix bx(static_cast<Eigen::Index>(stop - start), x.cols());
      Array by(bx.rows());
      for (std::size_t i = start; i < stop; ++i) {
        bx.row(static_cast<Eigen::Index>(i - start)) = x.row(idx[i]);
        by[static_cast<Eigen::Index>(i - start)] = y[idx[i]];
      }
      Mlp::Cache cache;
      const Array logits = net.forward(bx, &cache).col(0).array();
      Array d_logits;
      const double loss = weighted_bce(logits, by, Array::Ones(by.size()), d_logits);
      if (!std::isfinite(loss))
        throw TrainError("fit_classifier: non-finite loss at epoch " + std::to_string(epoch));
      std::vector<Matrix> grads = zero_like(params);
      net.backward(cache, d_logits.matrix(), grads);
      opt.step(params, grads);
    }
  }

  RatioEstimator est;
  est.kind = DreKind::Classifier;
  est.net = std::move(net);
  est.prior_correction =
      std::log(static_cast<double>(dq.rows()) / static_cast<double>(dp.rows()));
  return est;
}

// KLIEP: r(x) = sum_c theta_c k(x, center_c) with theta >= 0, maximizing the
// mean log-ratio over dp subject to mean ratio 1 over dq. Projected gradient
// ascent; each iteration clips to the nonnegative orthant and rescales theta
// so the dq constraint holds exactly.
inline RatioEstimator fit_kliep(const DataMatrix& dp, const DataMatrix& dq,
                                const KernelConfig& kcfg, long iters = 2000) {
  dp.validate("fit_kliep dp");
  dq.validate("fit_kliep dq");
  if (dp.dim() != dq.dim()) throw ConfigError("fit_kliep: dimension mismatch");
  if (iters < 0) throw ConfigError("fit_kliep: iters must be >= 0");

  const double sigma = resolve_bandwidth(kcfg, dp.values, dq.values);

  // At most 100 centers, evenly strided over dp.
  const Eigen::Index n_centers = std::min<Eigen::Index>(100, dp.rows());
  Matrix centers(n_centers, dp.dim());
  for (Eigen::Index c = 0; c < n_centers; ++c)
    centers.row(c) = dp.values.row(c * dp.rows() / n_centers);

  const Matrix a = gaussian_kernel(dp.values, centers, sigma);  // n_p x C
  const Vector b =
      gaussian_kernel(dq.values, centers, sigma).colwise().mean().transpose();  // C

  for (Eigen::Index i = 0; i < a.rows(); ++i)
    if (a.row(i).maxCoeff() < std::numeric_limits<double>::min())
      throw ConfigError("fit_kliep: kernel row " + std::to_string(i) +
                        " underflowed to zero; bandwidth too small");
  if (b.maxCoeff() <= 0.0)
    throw ConfigError("fit_kliep: constraint weights vanished; bandwidth too small");

  const double n_p = static_cast<double>(dp.rows());

  // Lipschitz estimate via power iteration on A^T A.
  Vector v = Vector::Ones(n_centers).normalized();
  double lam = 1.0;
  for (int it = 0; it < 50; ++it) {
    v = a.transpose() * (a * v);
    lam = v.norm();
    if (lam <= 0.0) break;
    v /= lam;
  }
  const double step = 0.1 / std::max(lam / n_p, 1e-12);

  const double bb = b.squaredNorm();
  Vector theta = Vector::Ones(n_centers);
  theta /= b.dot(theta);
  for (long it = 0; it < iters; ++it) {
    const Array r = (a * theta).array().cwiseMax(1e-12);
    const Vector grad = a.transpose() * (1.0 / r).matrix() / n_p;
    theta += step * grad;
    theta += (1.0 - b.dot(theta)) / bb * b;  // project onto the constraint hyperplane
    theta = theta.cwiseMax(0.0);
    theta /= b.dot(theta);  // feasibility renormalization after clipping
  }

  RatioEstimator est;
  est.kind = DreKind::Kliep;
  est.centers = std::move(centers);
  est.theta = std::move(theta);
  est.bandwidth = sigma;
  return est;
}

namespace detail {

// Euclidean projection onto {0 <= beta <= B, lo <= sum(beta) <= hi}:
// box clamp, then a uniform shift of the unsaturated coordinates (found by
// bisection) that lands the sum on the nearest band edge.
inline Vector project_box_band(Vector beta, double B, double lo, double hi) {
  beta = beta.cwiseMax(0.0).cwiseMin(B);
  const double s = beta.sum();
  if (s >= lo && s <= hi) return beta;
  const double target = s < lo ? lo : hi;
  double lam_lo = -B, lam_hi = B;
  for (int it = 0; it < 200; ++it) {
    const double lam = 0.5 * (lam_lo + lam_hi);
    const double total = (beta.array() + lam).cwiseMax(0.0).cwiseMin(B).sum();
    (total < target ? lam_lo : lam_hi) = lam;
  }
  return (beta.array() + 0.5 * (lam_lo + lam_hi)).cwiseMax(0.0).cwiseMin(B);
}

}  // namespace detail

struct KmmOptions {
  long max_iters = 50000;
  double tol = 1e-12;  // on the step infinity-norm
};

// Kernel mean matching: min_beta 1/2 beta'K beta - kappa'beta over the box
// [0,B]^n intersected with |sum(beta) - n_s| <= n_s*epsilon, by projected
// gradient descent with backtracking. beta estimates the target/source
// density ratio at the source rows.
inline RatioEstimator fit_kmm(const DataMatrix& source, const DataMatrix& target,
                              const KernelConfig& kcfg, const KmmOptions& opts = {}) {
  source.validate("fit_kmm source");
  target.validate("fit_kmm target");
  if (source.dim() != target.dim()) throw ConfigError("fit_kmm: dimension mismatch");

  const double sigma = resolve_bandwidth(kcfg, source.values, target.values);
  const Eigen::Index n_s = source.rows();
  const double ns = static_cast<double>(n_s);
  const double nt = static_cast<double>(target.rows());
  const double eps =
      kcfg.epsilon >= 0.0 ? kcfg.epsilon : (std::sqrt(ns) - 1.0) / std::sqrt(ns);
  const double lo = ns * (1.0 - eps), hi = ns * (1.0 + eps);
  if (ns * kcfg.B < lo)
    throw ConfigError("fit_kmm: box bound B too small for the sum-band constraint");

  Matrix k = gaussian_kernel(source.values, source.values, sigma);
  k.diagonal().array() += 1e-8;  // jitter for positive definiteness
  const Vector kappa =
      (ns / nt) * gaussian_kernel(source.values, target.values, sigma).rowwise().sum();

  auto objective = [&](const Vector& beta) {
    return 0.5 * beta.dot(k * beta) - kappa.dot(beta);
  };

  // Initial step from the largest eigenvalue of K; later iterations use the
  // Barzilai-Borwein spectral step, kept monotone by backtracking.
  Vector v = Vector::Ones(n_s).normalized();
  double lam = 1.0;
  for (int it = 0; it < 50; ++it) {
    v = k * v;
    lam = v.norm();
    if (lam <= 0.0) break;
    v /= lam;
  }
  double step = 1.0 / std::max(lam, 1e-12);

  Vector beta = detail::project_box_band(Vector::Ones(n_s), kcfg.B, lo, hi);
  double f = objective(beta);
  Vector grad = k * beta - kappa;
  bool converged = false;
  for (long it = 0; it < opts.max_iters; ++it) {
    Vector candidate;
    double f_new = f;
    double trial = step;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      candidate = detail::project_box_band(beta - trial * grad, kcfg.B, lo, hi);
      f_new = objective(candidate);
      if (f_new <= f) {
        accepted = true;
        break;
      }
      trial *= 0.5;
    }
    if (!accepted) {
      converged = true;  // no descent step at any tried scale: stationary
      break;
    }
    const Vector grad_new = k * candidate - kappa;
    const Vector s = candidate - beta;
    const double sy = s.dot(grad_new - grad);
    if (sy > 0.0) step = std::clamp(s.squaredNorm() / sy, 1e-12, 1e12);
    const double move = s.cwiseAbs().maxCoeff();
    beta = std::move(candidate);
    grad = grad_new;
    f = f_new;
    if (move < opts.tol) {
      converged = true;
      break;
    }
  }

  RatioEstimator est;
  est.kind = DreKind::KmmTransductive;
  est.source_rows = source.values;
  est.beta = std::move(beta);
  est.bandwidth = sigma;
  est.kmm_B = kcfg.B;
  est.kmm_epsilon = eps;
  est.kmm_objective = f;
  est.kmm_converged = converged;
  return est;
}

}  // namespace fdre
