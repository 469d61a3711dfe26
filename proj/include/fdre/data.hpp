#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "fdre/core.hpp"
#include "fdre/random.hpp"

namespace fdre {

struct GaussianPairSpec {
  Vector mean_p;
  Vector mean_q;
  Eigen::Index dim = 0;
  Eigen::Index n_per_side = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 1) throw ConfigError("GaussianPairSpec: dim must be >= 1");
    if (mean_p.size() != dim || mean_q.size() != dim)
      throw ConfigError("GaussianPairSpec: mean vectors must have length dim");
    if (n_per_side < 2) throw ConfigError("GaussianPairSpec: n_per_side must be >= 2");
  }
};

enum class BiasScheme { LabelBias, DistanceBias };

struct BiasSpec {
  BiasScheme scheme = BiasScheme::LabelBias;
  double keep_prob_pos = 1.0;
  double keep_prob_neg = 1.0;
  double sigma = 0.05;

  void validate() const {
    if (scheme == BiasScheme::LabelBias) {
      if (!(keep_prob_pos > 0.0 && keep_prob_pos <= 1.0) ||
          !(keep_prob_neg > 0.0 && keep_prob_neg <= 1.0))
        throw ConfigError("BiasSpec: keep probabilities must be in (0,1]");
    } else if (!(sigma > 0.0)) {
      throw ConfigError("BiasSpec: sigma must be > 0");
    }
  }
};

// Two i.i.d. samples from N(mean_p, I) and N(mean_q, I).
inline std::pair<DataMatrix, DataMatrix> gen_gaussian_pair(const GaussianPairSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Matrix p = rng.gaussian_matrix(spec.n_per_side, spec.dim);
  Matrix q = rng.gaussian_matrix(spec.n_per_side, spec.dim);
  p.rowwise() += spec.mean_p.transpose();
  q.rowwise() += spec.mean_q.transpose();
  return {DataMatrix(std::move(p)), DataMatrix(std::move(q))};
}

// 2-D domain-adaptation mixture: the source mixes N(0,I) (label 1) and
// N([3,3],I) (label 0) with weights (w, 1-w); the target swaps the weights.
// Component counts are rounded, not Bernoulli-sampled, and rows are shuffled.
inline std::pair<LabeledData, LabeledData> gen_mixture_da(Eigen::Index n, double weight_source,
                                                          std::uint64_t seed) {
  if (!(weight_source > 0.0 && weight_source < 1.0))
    throw ConfigError("gen_mixture_da: weight_source must be in (0,1)");
  if (n < 2) throw ConfigError("gen_mixture_da: n must be >= 2");

  Rng rng(seed);
  const Vector mean0 = Vector::Zero(2);
  Vector mean1(2);
  mean1 << 3.0, 3.0;

  auto make_side = [&](double w) {
    auto n1 = static_cast<Eigen::Index>(std::llround(static_cast<double>(n) * w));
    n1 = std::min(std::max<Eigen::Index>(n1, 1), n - 1);
    Matrix values(n, 2);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool comp1 = i < n1;  // N(0,I) component, label 1
      Vector x = rng.gaussian_matrix(1, 2).transpose();
      values.row(i) = (comp1 ? x + mean0 : x + mean1).transpose();
      labels[static_cast<std::size_t>(i)] = comp1 ? 1 : 0;
    }
    const auto perm = rng.permutation(n);
    Matrix shuffled(n, 2);
    std::vector<int> shuffled_labels(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      shuffled.row(i) = values.row(perm[static_cast<std::size_t>(i)]);
      shuffled_labels[static_cast<std::size_t>(i)] =
          labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    return LabeledData{DataMatrix(std::move(shuffled)), std::move(shuffled_labels)};
  };

  LabeledData source = make_side(weight_source);
  LabeledData target = make_side(1.0 - weight_source);
  return {std::move(source), std::move(target)};
}

// Correlated Gaussian pairs for MI estimation. Joint rows are (x, y) with
// y_i = rho*x_i + sqrt(1-rho^2)*eps_i per coordinate; the marginals set is an
// independent draw whose y-halves are permuted across rows, so it follows the
// product of marginals. Both outputs have width 2*dim.
inline std::pair<DataMatrix, DataMatrix> gen_correlated_gaussians(Eigen::Index dim, double rho,
                                                                  Eigen::Index n,
                                                                  std::uint64_t seed) {
  if (dim < 1) throw ConfigError("gen_correlated_gaussians: dim must be >= 1");
  if (!(std::abs(rho) < 1.0)) throw ConfigError("gen_correlated_gaussians: |rho| must be < 1");
  if (n < 2) throw ConfigError("gen_correlated_gaussians: n must be >= 2");

  Rng rng(seed);
  const double noise = std::sqrt(1.0 - rho * rho);
  auto draw_pairs = [&]() {
    Matrix out(n, 2 * dim);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < dim; ++j) {
        const double x = rng.gaussian();
        out(i, j) = x;
        out(i, dim + j) = rho * x + noise * rng.gaussian();
      }
    return out;
  };

  Matrix joint = draw_pairs();
  Matrix marg = draw_pairs();
  const auto perm = rng.permutation(n);
  Matrix shuffled_half(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    shuffled_half.row(i) = marg.row(perm[static_cast<std::size_t>(i)]).tail(dim);
  marg.rightCols(dim) = shuffled_half;
  return {DataMatrix(std::move(joint)), DataMatrix(std::move(marg))};
}

struct StandardizeRecord {
  Vector mean;
  Vector scale;  // per-feature std; 1 for constant columns
};

// Per-feature zero-mean unit-variance transform (population variance).
inline std::pair<DataMatrix, StandardizeRecord> standardize(const DataMatrix& data) {
  data.validate("standardize");
  const Eigen::Index n = data.rows(), d = data.dim();
  StandardizeRecord rec;
  rec.mean = data.values.colwise().mean();
  rec.scale.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var =
        (data.values.col(j).array() - rec.mean[j]).square().sum() / static_cast<double>(n);
    rec.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  Matrix out = data.values;
  out.rowwise() -= rec.mean.transpose();
  out.array().rowwise() /= rec.scale.transpose().array();
  return {DataMatrix(std::move(out)), std::move(rec)};
}

inline DataMatrix unstandardize(const DataMatrix& data, const StandardizeRecord& rec) {
  Matrix out = data.values;
  out.array().rowwise() *= rec.scale.transpose().array();
  out.rowwise() += rec.mean.transpose();
  return DataMatrix(std::move(out));
}

inline DataMatrix apply_standardize(const DataMatrix& data, const StandardizeRecord& rec) {
  Matrix out = data.values;
  out.rowwise() -= rec.mean.transpose();
  out.array().rowwise() /= rec.scale.transpose().array();
  return DataMatrix(std::move(out));
}

// Keeps rows by the requested biasing scheme. Label bias keeps label-1 rows
// with keep_prob_pos and label-0 rows with keep_prob_neg. Distance bias keeps
// row i with probability exp(-sigma*||x_i - mean||^2) normalized so the
// closest row has keep probability 1; the centroid is computed once on the
// full input. Retries with a derived seed when everything is dropped.
inline LabeledData biased_subsample(const LabeledData& data, const BiasSpec& spec,
                                    std::uint64_t seed) {
  data.validate("biased_subsample");
  spec.validate();
  const Eigen::Index n = data.rows();

  Array keep_prob(n);
  if (spec.scheme == BiasScheme::LabelBias) {
    if (data.labels.empty())
      throw ConfigError("biased_subsample: label-bias requires labeled data");
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = data.labels[static_cast<std::size_t>(i)];
      if (y != 0 && y != 1)
        throw ConfigError("biased_subsample: label-bias requires binary {0,1} labels");
      keep_prob[i] = y == 1 ? spec.keep_prob_pos : spec.keep_prob_neg;
    }
  } else {
    const Vector centroid = data.features.values.colwise().mean();
    const Array sq = (data.features.values.rowwise() - centroid.transpose()).rowwise().squaredNorm();
    const Array logp = -spec.sigma * sq;
    keep_prob = (logp - logp.maxCoeff()).exp();
  }

  for (int attempt = 0; attempt < 100; ++attempt) {
    Rng rng(attempt == 0 ? seed : Rng::derive(seed, static_cast<std::uint64_t>(attempt)));
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < n; ++i)
      if (rng.uniform() < keep_prob[i]) kept.push_back(i);
    if (kept.empty()) continue;
    LabeledData out;
    out.features = take_rows(data.features, kept);
    if (!data.labels.empty()) {
      out.labels.reserve(kept.size());
      for (const auto i : kept) out.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
    }
    return out;
  }
  throw NumericError("biased_subsample: no rows retained after 100 attempts");
}

}  // namespace fdre
