#pragma once

#include <cmath>
#include <vector>

#include "fdre/core.hpp"
#include "fdre/mlp.hpp"
#include "fdre/random.hpp"

namespace fdre {

// One masked autoregressive affine block. A masked ReLU network maps x to a
// per-coordinate shift mu(x) and log-scale a(x); the transform is
// u = (x - mu(x)) * exp(-a(x)). Masks follow the degree-assignment rule:
// input degrees are the 1-based ordering positions, hidden degrees cycle
// 1..dim-1, and head coordinate j receives only degrees strictly below its
// own, so (mu_j, a_j) depend on coordinates preceding j in the ordering.
class MadeBlock {
 public:
  static constexpr double kLogScaleClamp = 7.0;

  MadeBlock() = default;

  MadeBlock(Eigen::Index dim, const std::vector<Eigen::Index>& hidden_sizes,
            std::vector<Eigen::Index> ordering, Rng& rng)
      : dim_(dim), hidden_sizes_(hidden_sizes), ordering_(std::move(ordering)) {
    if (dim < 1) throw ConfigError("MadeBlock: dim must be >= 1");
    if (static_cast<Eigen::Index>(ordering_.size()) != dim)
      throw ConfigError("MadeBlock: ordering length must equal dim");
    for (const auto h : hidden_sizes_)
      if (h < 1) throw ConfigError("MadeBlock: hidden sizes must be >= 1");

    build_masks();

    // Hidden weights are Glorot-uniform under the mask; both heads start at
    // zero so a fresh block is the identity map.
    for (std::size_t l = 0; l < hidden_sizes_.size(); ++l) {
      const Eigen::Index rows = masks_[l].rows(), cols = masks_[l].cols();
      const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
      Matrix w(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform_in(-bound, bound);
      weights_.push_back(w.cwiseProduct(masks_[l]));
      biases_.push_back(Matrix::Zero(1, rows));
    }
    w_mu_ = Matrix::Zero(dim_, head_in());
    b_mu_ = Matrix::Zero(1, dim_);
    w_a_ = Matrix::Zero(dim_, head_in());
    b_a_ = Matrix::Zero(1, dim_);
  }

  Eigen::Index dim() const { return dim_; }
  const std::vector<Eigen::Index>& ordering() const { return ordering_; }
  const std::vector<Eigen::Index>& hidden_sizes() const { return hidden_sizes_; }
  const Matrix& hidden_mask(std::size_t l) const { return masks_[l]; }
  const Matrix& head_mask() const { return mask_out_; }

  struct Cache {
    std::vector<Matrix> acts;  // acts[0] = x, then post-ReLU hidden layers
    Matrix mu, a_raw, a, exp_neg_a, u;
  };

  // Runs the masked network; fills mu and the clamped log-scale a.
  void heads(const Matrix& x, Matrix& mu, Matrix& a, Cache* cache = nullptr) const {
    Matrix h = x;
    if (cache) cache->acts = {h};
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = ((h * weights_[l].cwiseProduct(masks_[l]).transpose()).rowwise() + biases_[l].row(0))
              .cwiseMax(0.0);
      if (cache) cache->acts.push_back(h);
    }
    mu = (h * w_mu_.cwiseProduct(mask_out_).transpose()).rowwise() + b_mu_.row(0);
    Matrix a_raw = (h * w_a_.cwiseProduct(mask_out_).transpose()).rowwise() + b_a_.row(0);
    a = a_raw.cwiseMax(-kLogScaleClamp).cwiseMin(kLogScaleClamp);
    if (cache) {
      cache->mu = mu;
      cache->a_raw = std::move(a_raw);
      cache->a = a;
    }
  }

  // u = (x - mu) * exp(-a); per-row log-determinant contribution is
  // -a.rowwise().sum().
  Matrix forward(const Matrix& x, Array& logdet, Cache* cache = nullptr) const {
    Matrix mu, a;
    heads(x, mu, a, cache);
    const Matrix exp_neg_a = (-a.array()).exp().matrix();
    Matrix u = (x - mu).cwiseProduct(exp_neg_a);
    logdet = -a.rowwise().sum().array();
    if (cache) {
      cache->exp_neg_a = exp_neg_a;
      cache->u = u;
    }
    return u;
  }

  // Sequential inversion: coordinates are filled in ordering sequence, each
  // pass re-evaluating the heads on the partially reconstructed input.
  Matrix inverse(const Matrix& u) const {
    Matrix x = Matrix::Zero(u.rows(), u.cols());
    Matrix mu, a;
    for (Eigen::Index t = 0; t < dim_; ++t) {
      heads(x, mu, a);
      const Eigen::Index j = ordering_[static_cast<std::size_t>(t)];
      x.col(j) = u.col(j).cwiseProduct(a.col(j).array().exp().matrix()) + mu.col(j);
    }
    return x;
  }

  std::size_t n_params() const { return 2 * weights_.size() + 4; }

  // Backprop through the block. d_u is d(loss)/d(u); logdet_coeff[i] is
  // d(loss)/d(logdet_i). Gradients accumulate at grads[offset..] in params()
  // order; returns d(loss)/d(x).
  Matrix backward(const Cache& cache, const Matrix& d_u, const Array& logdet_coeff,
                  std::vector<Matrix>& grads, std::size_t offset) const {
    const Matrix d_mu = -d_u.cwiseProduct(cache.exp_neg_a);
    Matrix d_a = -d_u.cwiseProduct(cache.u);
    d_a.array().colwise() -= logdet_coeff;
    const Matrix clamp_mask =
        (cache.a_raw.array().abs() < kLogScaleClamp).cast<double>().matrix();
    const Matrix d_a_raw = d_a.cwiseProduct(clamp_mask);

    const std::size_t L = weights_.size();
    const Matrix& h_last = cache.acts[L];
    const std::size_t gmu = offset + 2 * L, ga = offset + 2 * L + 2;
    grads[gmu] += (d_mu.transpose() * h_last).cwiseProduct(mask_out_);
    grads[gmu + 1].row(0) += d_mu.colwise().sum();
    grads[ga] += (d_a_raw.transpose() * h_last).cwiseProduct(mask_out_);
    grads[ga + 1].row(0) += d_a_raw.colwise().sum();

    Matrix delta = d_mu * w_mu_.cwiseProduct(mask_out_) + d_a_raw * w_a_.cwiseProduct(mask_out_);
    for (std::size_t l = L; l-- > 0;) {
      delta = delta.cwiseProduct((cache.acts[l + 1].array() > 0.0).cast<double>().matrix());
      grads[offset + 2 * l] += (delta.transpose() * cache.acts[l]).cwiseProduct(masks_[l]);
      grads[offset + 2 * l + 1].row(0) += delta.colwise().sum();
      delta = delta * weights_[l].cwiseProduct(masks_[l]);
    }
    return delta + d_u.cwiseProduct(cache.exp_neg_a);
  }

  std::vector<Matrix*> params() {
    std::vector<Matrix*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    out.push_back(&w_mu_);
    out.push_back(&b_mu_);
    out.push_back(&w_a_);
    out.push_back(&b_a_);
    return out;
  }

  std::vector<const Matrix*> params() const {
    std::vector<const Matrix*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    out.push_back(&w_mu_);
    out.push_back(&b_mu_);
    out.push_back(&w_a_);
    out.push_back(&b_a_);
    return out;
  }

 private:
  Eigen::Index head_in() const { return hidden_sizes_.empty() ? dim_ : hidden_sizes_.back(); }

  void build_masks() {
    std::vector<Eigen::Index> in_deg(static_cast<std::size_t>(dim_));
    for (Eigen::Index t = 0; t < dim_; ++t)
      in_deg[static_cast<std::size_t>(ordering_[static_cast<std::size_t>(t)])] = t + 1;

    const Eigen::Index cycle = std::max<Eigen::Index>(1, dim_ - 1);
    std::vector<Eigen::Index> prev_deg = in_deg;
    masks_.clear();
    for (const auto h : hidden_sizes_) {
      std::vector<Eigen::Index> deg(static_cast<std::size_t>(h));
      for (Eigen::Index u = 0; u < h; ++u) deg[static_cast<std::size_t>(u)] = u % cycle + 1;
      Matrix m(h, static_cast<Eigen::Index>(prev_deg.size()));
      for (Eigen::Index u = 0; u < h; ++u)
        for (Eigen::Index v = 0; v < m.cols(); ++v)
          m(u, v) = deg[static_cast<std::size_t>(u)] >= prev_deg[static_cast<std::size_t>(v)]
                        ? 1.0
                        : 0.0;
      masks_.push_back(std::move(m));
      prev_deg = std::move(deg);
    }

    mask_out_ = Matrix(dim_, static_cast<Eigen::Index>(prev_deg.size()));
    for (Eigen::Index j = 0; j < dim_; ++j)
      for (Eigen::Index v = 0; v < mask_out_.cols(); ++v)
        mask_out_(j, v) =
            in_deg[static_cast<std::size_t>(j)] > prev_deg[static_cast<std::size_t>(v)] ? 1.0
                                                                                        : 0.0;
  }

  Eigen::Index dim_ = 0;
  std::vector<Eigen::Index> hidden_sizes_;
  std::vector<Eigen::Index> ordering_;
  std::vector<Matrix> masks_;
  std::vector<Matrix> weights_;
  std::vector<Matrix> biases_;
  Matrix w_mu_, b_mu_, w_a_, b_a_, mask_out_;
};

}  // namespace fdre
