#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "fdre/core.hpp"
#include "fdre/made.hpp"
#include "fdre/random.hpp"

namespace fdre {

// Per-feature invertible affine placed after each block:
// y = u * exp(log_scale) + shift. Initialized from the first training batch
// so block outputs start zero-mean unit-variance, then trained as ordinary
// parameters.
struct AffineNorm {
  Matrix log_scale;  // 1 x dim
  Matrix shift;      // 1 x dim

  explicit AffineNorm(Eigen::Index dim = 0)
      : log_scale(Matrix::Zero(1, dim)), shift(Matrix::Zero(1, dim)) {}

  Matrix forward(const Matrix& u, Array& logdet) const {
    logdet = Array::Constant(u.rows(), log_scale.row(0).sum());
    return (u.array().rowwise() * log_scale.row(0).array().exp()).matrix().rowwise() +
           shift.row(0);
  }

  Matrix inverse(const Matrix& y) const {
    return ((y.rowwise() - shift.row(0)).array().rowwise() *
            (-log_scale.row(0).array()).exp())
        .matrix();
  }

  // d_y is d(loss)/d(y); logdet_coeff[i] is d(loss)/d(logdet_i).
  Matrix backward(const Matrix& u, const Matrix& d_y, const Array& logdet_coeff,
                  Matrix& g_log_scale, Matrix& g_shift) const {
    const Eigen::RowVectorXd scale = log_scale.row(0).array().exp().matrix();
    g_log_scale.row(0).array() +=
        d_y.cwiseProduct(u).colwise().sum().array() * scale.array() + logdet_coeff.sum();
    g_shift.row(0) += d_y.colwise().sum();
    return (d_y.array().rowwise() * scale.array()).matrix();
  }

  void init_from_batch(const Matrix& u) {
    const Eigen::Index n = u.rows();
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
      const double m = u.col(j).mean();
      const double var = (u.col(j).array() - m).square().sum() / static_cast<double>(n);
      const double sd = std::sqrt(std::max(var, 1e-12));
      log_scale(0, j) = -std::log(sd);
      shift(0, j) = -m / sd;
    }
  }
};

struct FlowForward {
  DataMatrix z;
  Array logdet;
};

// Masked autoregressive flow: MADE blocks interleaved with affine
// normalizers mapping data x to base-space z with an exact per-row
// log-determinant. The base density is N(0, I).
class FlowModel {
 public:
  FlowModel() = default;

  // First block uses the sequential ordering; each subsequent block reverses
  // the previous one.
  static FlowModel build(Eigen::Index dim, std::size_t n_blocks,
                         const std::vector<Eigen::Index>& hidden_sizes, std::uint64_t seed) {
    if (dim < 1) throw ConfigError("FlowModel: dim must be >= 1");
    if (n_blocks < 1) throw ConfigError("FlowModel: needs at least one block");
    FlowModel model;
    model.dim_ = dim;
    Rng rng(seed);
    std::vector<Eigen::Index> ordering(static_cast<std::size_t>(dim));
    for (Eigen::Index i = 0; i < dim; ++i) ordering[static_cast<std::size_t>(i)] = i;
    for (std::size_t b = 0; b < n_blocks; ++b) {
      model.blocks_.emplace_back(dim, hidden_sizes, ordering, rng);
      model.norms_.emplace_back(dim);
      std::reverse(ordering.begin(), ordering.end());
    }
    return model;
  }

  static FlowModel from_parts(Eigen::Index dim, std::vector<MadeBlock> blocks,
                              std::vector<AffineNorm> norms, bool norms_initialized) {
    if (blocks.size() != norms.size() || blocks.empty())
      throw ConfigError("FlowModel: blocks and norms must pair up");
    FlowModel model;
    model.dim_ = dim;
    model.blocks_ = std::move(blocks);
    model.norms_ = std::move(norms);
    model.norms_initialized_ = norms_initialized;
    return model;
  }

  Eigen::Index dim() const { return dim_; }
  std::size_t n_blocks() const { return blocks_.size(); }
  const std::vector<MadeBlock>& blocks() const { return blocks_; }
  const std::vector<AffineNorm>& norms() const { return norms_; }
  std::vector<MadeBlock>& blocks() { return blocks_; }
  std::vector<AffineNorm>& norms() { return norms_; }
  bool norms_initialized() const { return norms_initialized_; }
  void set_norms_initialized(bool v) { norms_initialized_ = v; }

  struct Cache {
    std::vector<MadeBlock::Cache> block;  // block[b].u is the normalizer input
  };

  FlowForward forward(const DataMatrix& x, Cache* cache = nullptr) const {
    check_input(x, "forward");
    Matrix h = x.values;
    Array total = Array::Zero(h.rows());
    if (cache) cache->block.resize(blocks_.size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      Array ld;
      Matrix u = blocks_[b].forward(h, ld, cache ? &cache->block[b] : nullptr);
      total += ld;
      h = norms_[b].forward(u, ld);
      total += ld;
      if (!h.allFinite())
        throw NumericError("FlowModel::forward: non-finite output at block " +
                           std::to_string(b));
    }
    return {DataMatrix(std::move(h)), std::move(total)};
  }

  DataMatrix inverse(const DataMatrix& z) const {
    check_input(z, "inverse");
    Matrix h = z.values;
    for (std::size_t b = blocks_.size(); b-- > 0;) {
      h = norms_[b].inverse(h);
      h = blocks_[b].inverse(h);
      if (!h.allFinite())
        throw NumericError("FlowModel::inverse: non-finite output at block " +
                           std::to_string(b));
    }
    return DataMatrix(std::move(h));
  }

  // log p(x) = log N(f(x); 0, I) + logdet.
  Array log_prob(const DataMatrix& x) const {
    const FlowForward fwd = forward(x);
    return base_log_prob(fwd.z) + fwd.logdet;
  }

  Array base_log_prob(const DataMatrix& z) const {
    const double c = 0.5 * static_cast<double>(dim_) * std::log(2.0 * std::numbers::pi);
    return -0.5 * z.values.rowwise().squaredNorm().array() - c;
  }

  DataMatrix sample(Eigen::Index n, std::uint64_t seed) const {
    Rng rng(seed);
    return inverse(DataMatrix(rng.gaussian_matrix(n, dim_)));
  }

  std::size_t n_params() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.n_params() + 2;
    return n;
  }

  // Backprop through the whole stack; d_z is d(loss)/d(z), logdet_coeff[i] is
  // d(loss)/d(logdet_i). Gradients accumulate at grads[offset..] in params()
  // order; returns d(loss)/d(x).
  Matrix backward(const Cache& cache, const Matrix& d_z, const Array& logdet_coeff,
                  std::vector<Matrix>& grads, std::size_t offset = 0) const {
    Matrix delta = d_z;
    std::size_t g = offset + n_params();
    for (std::size_t b = blocks_.size(); b-- > 0;) {
      g -= 2;
      delta = norms_[b].backward(cache.block[b].u, delta, logdet_coeff, grads[g], grads[g + 1]);
      g -= blocks_[b].n_params();
      delta = blocks_[b].backward(cache.block[b], delta, logdet_coeff, grads, g);
    }
    return delta;
  }

  std::vector<Matrix*> params() {
    std::vector<Matrix*> out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      for (auto* p : blocks_[b].params()) out.push_back(p);
      out.push_back(&norms_[b].log_scale);
      out.push_back(&norms_[b].shift);
    }
    return out;
  }

  std::vector<const Matrix*> params() const {
    std::vector<const Matrix*> out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      for (const auto* p : blocks_[b].params()) out.push_back(p);
      out.push_back(&norms_[b].log_scale);
      out.push_back(&norms_[b].shift);
    }
    return out;
  }

  // Data-dependent init of the normalizers: one pass through the stack, each
  // normalizer set from its block's output statistics on this batch.
  void init_norms_from_batch(const Matrix& batch) {
    Matrix h = batch;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      Array ld;
      Matrix u = blocks_[b].forward(h, ld);
      norms_[b].init_from_batch(u);
      h = norms_[b].forward(u, ld);
    }
    norms_initialized_ = true;
  }

 private:
  void check_input(const DataMatrix& x, const char* what) const {
    x.validate("FlowModel input");
    if (x.dim() != dim_)
      throw ConfigError(std::string("FlowModel::") + what + ": input dim " +
                        std::to_string(x.dim()) + " != model dim " + std::to_string(dim_));
  }

  Eigen::Index dim_ = 0;
  std::vector<MadeBlock> blocks_;
  std::vector<AffineNorm> norms_;
  bool norms_initialized_ = false;
};

}  // namespace fdre
