#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fdre/core.hpp"
#include "fdre/data.hpp"
#include "fdre/dre.hpp"
#include "fdre/featurize.hpp"
#include "fdre/flow.hpp"
#include "fdre/mlp.hpp"
#include "fdre/optim.hpp"
#include "fdre/random.hpp"
#include "fdre/stats.hpp"

namespace fdre {

struct WeightVector {
  Array weights;
  bool normalized = false;
};

// r_i / sum_j r_j
inline WeightVector self_normalize(const Array& w) {
  if ((w < 0.0).any()) throw ConfigError("self_normalize: weights must be nonnegative");
  const double total = w.sum();
  if (!(total > 0.0)) throw NumericError("self_normalize: degenerate all-zero weights");
  return {w / total, true};
}

// r^gamma elementwise; gamma in [0,1] tempers extreme ratios
inline Array flatten(const Array& w, double gamma) {
  if (gamma < 0.0) throw ConfigError("flatten: gamma must be >= 0");
  if ((w < 0.0).any()) throw ConfigError("flatten: weights must be nonnegative");
  return w.pow(gamma);
}

// r / (0.5 * (r + 1)): converts p/q ratios into weights against the
// half-half mixture the flow was trained on; maps [0,inf) into [0,2).
inline Array rebalance_mixture(const Array& r) {
  if ((r < 0.0).any()) throw ConfigError("rebalance_mixture: ratios must be nonnegative");
  return r / (0.5 * (r + 1.0));
}

// Ratio estimates evaluated at base-space points z.
using LogRatioOnZ = std::function<Array(const DataMatrix&)>;

struct SirOptions {
  double gamma = 1.0;  // flattening exponent applied before self-normalization
};

// Sampling-importance-resampling through a flow trained on the p/q mixture:
// draw proposals z ~ N(0,I), weight by the rebalanced self-normalized ratio
// estimates on z, resample indices categorically, and map the winners back
// through the inverse flow.
inline DataMatrix sir_sample(const FlowModel& flow, const LogRatioOnZ& log_ratio_on_z,
                             Eigen::Index n_proposals, Eigen::Index n_out,
                             std::uint64_t seed, const SirOptions& opts = {}) {
  if (n_proposals < 1 || n_out < 1) throw ConfigError("sir_sample: counts must be >= 1");
  Rng rng(seed);
  const DataMatrix z(rng.gaussian_matrix(n_proposals, flow.dim()));
  const Array r = log_ratio_on_z(z).exp();
  Array w = rebalance_mixture(r);
  if (opts.gamma != 1.0) w = flatten(w, opts.gamma);
  const WeightVector norm = self_normalize(w);

  Matrix picked(n_out, flow.dim());
  for (Eigen::Index i = 0; i < n_out; ++i)
    picked.row(i) = z.values.row(rng.categorical(norm.weights));
  return flow.inverse(DataMatrix(std::move(picked)));
}

struct MIEstimate {
  double value = 0.0;  // nats
  Eigen::Index n_joint = 0;
  std::string estimator_kind;
};

// Fits a ratio estimator between joint samples and product-of-marginals
// samples on the first 80% of rows and reports the mean log-ratio over the
// final 10% test block (the middle 10% is left out, mirroring an
// 80/10/10 protocol). fit returns a log-ratio function trained on
// (joint_train, marginals_train).
inline MIEstimate estimate_mi(
    const DataMatrix& joint, const DataMatrix& marginals,
    const std::function<std::function<Array(const DataMatrix&)>(const DataMatrix&,
                                                                const DataMatrix&)>& fit,
    const std::string& kind = "classifier") {
  if (joint.dim() != marginals.dim()) throw ConfigError("estimate_mi: dimension mismatch");
  const Eigen::Index n = joint.rows();
  const Eigen::Index n_train = n * 8 / 10;
  const Eigen::Index n_test = n - n * 9 / 10;
  if (n_train < 2 || n_test < 1) throw ConfigError("estimate_mi: too few rows to split");

  const DataMatrix joint_train(joint.values.topRows(n_train));
  const Eigen::Index m_train = std::min(n_train, marginals.rows());
  const DataMatrix marg_train(marginals.values.topRows(m_train));
  const DataMatrix joint_test(joint.values.bottomRows(n_test));

  const auto log_ratio = fit(joint_train, marg_train);
  MIEstimate est;
  est.value = log_ratio(joint_test).mean();
  est.n_joint = n;
  est.estimator_kind = kind;
  return est;
}

inline double true_gaussian_mi(Eigen::Index dim, double rho) {
  return -0.5 * static_cast<double>(dim) * std::log(1.0 - rho * rho);
}

// Weighted logistic-style training: minimizes the weight-normalized BCE
// sum_i w_i l_i / sum_i w_i over minibatches, so uniform weights reproduce
// unweighted training and zero-weight rows drop out of the objective.
inline Mlp fit_weighted_classifier(const LabeledData& train, const Array& weights,
                                   const ClassifierConfig& cfg) {
  train.validate("fit_weighted_classifier");
  cfg.validate();
  if (weights.size() != train.rows())
    throw ConfigError("fit_weighted_classifier: weights length must match rows");
  if ((weights < 0.0).any())
    throw ConfigError("fit_weighted_classifier: weights must be nonnegative");

  Rng rng(cfg.seed);
  Mlp net(train.dim(), cfg.hidden_sizes, 1, rng);
  AdamW opt(cfg.learning_rate, cfg.weight_decay);
  auto params = net.params();

  const Eigen::Index n = train.rows();
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
      Matrix bx(static_cast<Eigen::Index>(stop - start), train.dim());
      Array by(bx.rows()), bw(bx.rows());
      for (std::size_t i = start; i < stop; ++i) {
        const Eigen::Index row = idx[i];
        bx.row(static_cast<Eigen::Index>(i - start)) = train.features.values.row(row);
        by[static_cast<Eigen::Index>(i - start)] =
            static_cast<double>(train.labels[static_cast<std::size_t>(row)]);
        bw[static_cast<Eigen::Index>(i - start)] = weights[row];
      }
      if (!(bw.sum() > 0.0)) continue;  // batch carries no effective samples
      Mlp::Cache cache;
      const Array logits = net.forward(bx, &cache).col(0).array();
      Array d_logits;
      const double loss = weighted_bce(logits, by, bw, d_logits);
      if (!std::isfinite(loss))
        throw TrainError("fit_weighted_classifier: non-finite loss at epoch " +
                         std::to_string(epoch));
      std::vector<Matrix> grads = zero_like(params);
      net.backward(cache, d_logits.matrix(), grads);
      opt.step(params, grads);
    }
  }
  return net;
}

inline double zero_one_error(const Mlp& net, const LabeledData& test) {
  const Array logits = net.forward(test.features.values).col(0).array();
  double wrong = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const int pred = logits[i] > 0.0 ? 1 : 0;
    if (pred != test.labels[static_cast<std::size_t>(i)]) wrong += 1.0;
  }
  return wrong / static_cast<double>(test.rows());
}

// Importance-weighted empirical risk minimization; returns the 0/1 test error.
inline double weighted_erm(const LabeledData& train, const WeightVector& weights,
                           const LabeledData& test, const ClassifierConfig& cfg) {
  const Mlp net = fit_weighted_classifier(train, weights.weights, cfg);
  return zero_one_error(net, test);
}

// Sample-size threshold below which, with probability at least delta, a size-n
// sample from N(m,1) contains no nonpositive draw: log(1-delta) / log(1-exp(-m^2/2)).
inline double pathology_bound(double m, double delta) {
  if (!(m > 0.0)) throw ConfigError("pathology_bound: m must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("pathology_bound: delta in (0,1)");
  return std::log1p(-delta) / std::log1p(-std::exp(-0.5 * m * m));
}

struct PathologyReport {
  std::vector<double> raw_slopes;
  std::vector<double> featurized_slopes;  // secant of the composed log-ratio on [0,1]
  std::vector<double> featurized_mse;
  std::vector<double> raw_mse;
  double true_slope = 0.0;  // 2m
};

// Both arms share this schedule. The default learning rate is deliberately
// aggressive: on well-separated data the logistic objective rewards ever
// larger slopes, and a large step lets the raw-space fit follow that
// incentive well past the true value, while the same schedule on the
// contracted encodings stays tempered.
struct PathologySchedule {
  long classifier_epochs = 300;
  double classifier_lr = 5.0;
  long flow_epochs = 60;
};

// Separated 1-D Gaussians N(+m,1) vs N(-m,1): logistic regression in input
// space against the same model fitted on flow encodings, scored by grid MSE
// of the estimated log-ratio against the analytic 2mx over [-(m+2), m+2].
inline PathologyReport pathology_demo(double m, Eigen::Index n,
                                      const std::vector<std::uint64_t>& seeds,
                                      const PathologySchedule& sched = {}) {
  if (!(m > 0.0)) throw ConfigError("pathology_demo: m must be > 0");
  PathologyReport report;
  report.true_slope = 2.0 * m;

  const Eigen::Index grid_n = 201;
  Matrix grid(grid_n, 1);
  const double span = m + 2.0;
  for (Eigen::Index i = 0; i < grid_n; ++i)
    grid(i, 0) = -span + 2.0 * span * static_cast<double>(i) / static_cast<double>(grid_n - 1);
  const Array truth = 2.0 * m * grid.col(0).array();

  for (const auto seed : seeds) {
    GaussianPairSpec spec;
    spec.dim = 1;
    spec.mean_p = Vector::Constant(1, m);
    spec.mean_q = Vector::Constant(1, -m);
    spec.n_per_side = n;
    spec.seed = seed;
    const auto [dp, dq] = gen_gaussian_pair(spec);

    ClassifierConfig ccfg;  // logistic regression, no decay: lets the slope run
    ccfg.epochs = sched.classifier_epochs;
    ccfg.learning_rate = sched.classifier_lr;
    ccfg.weight_decay = 0.0;
    ccfg.seed = seed;

    const RatioEstimator raw = fit_classifier(dp, dq, ccfg);
    report.raw_slopes.push_back((*raw.net.params()[0])(0, 0));
    report.raw_mse.push_back((raw.log_ratio(DataMatrix(grid)) - truth).square().mean());

    FlowTrainConfig fcfg;
    fcfg.epochs = sched.flow_epochs;
    fcfg.seed = Rng::derive(seed, 1);
    fcfg.batch_size = std::min<Eigen::Index>(100, 2 * n);
    DreRecipe recipe;
    recipe.kind = DreKind::Classifier;
    recipe.classifier = ccfg;
    const FeaturizedEstimator feat = fit_featurized(
        dp, dq, recipe, FlowModel::build(1, 5, {100}, Rng::derive(seed, 2)), fcfg);
    report.featurized_mse.push_back(
        (feat.log_ratio(DataMatrix(grid)) - truth).square().mean());
    Matrix unit(2, 1);
    unit << 0.0, 1.0;
    const Array at = feat.log_ratio(DataMatrix(unit));
    report.featurized_slopes.push_back(at[1] - at[0]);
  }
  return report;
}

}  // namespace fdre
