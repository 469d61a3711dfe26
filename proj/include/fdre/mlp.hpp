#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fdre/core.hpp"
#include "fdre/optim.hpp"
#include "fdre/random.hpp"

namespace fdre {

// Fully connected ReLU network with a single linear output head. Hidden
// weights are Glorot-uniform; the output layer starts at zero so an untrained
// binary classifier scores logit 0 everywhere. Biases are stored as 1 x k
// matrices so every parameter shares one tensor type.
class Mlp {
 public:
  Mlp() = default;

  Mlp(Eigen::Index in_dim, const std::vector<Eigen::Index>& hidden, Eigen::Index out_dim,
      Rng& rng)
      : in_dim_(in_dim), out_dim_(out_dim) {
    Eigen::Index prev = in_dim;
    for (const auto h : hidden) {
      if (h < 1) throw ConfigError("Mlp: hidden sizes must be >= 1");
      weights_.push_back(glorot(h, prev, rng));
      biases_.push_back(Matrix::Zero(1, h));
      prev = h;
    }
    weights_.push_back(Matrix::Zero(out_dim, prev));
    biases_.push_back(Matrix::Zero(1, out_dim));
  }

  Eigen::Index in_dim() const { return in_dim_; }
  Eigen::Index out_dim() const { return out_dim_; }
  std::size_t n_layers() const { return weights_.size(); }

  struct Cache {
    std::vector<Matrix> acts;  // acts[0] = input, acts[l] = post-ReLU layer l
  };

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    Matrix h = x;
    if (cache) cache->acts = {h};
    for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
      h = ((h * weights_[l].transpose()).rowwise() + biases_[l].row(0)).cwiseMax(0.0);
      if (cache) cache->acts.push_back(h);
    }
    return (h * weights_.back().transpose()).rowwise() + biases_.back().row(0);
  }

  // Backward pass from d(loss)/d(output); accumulates at grads[offset..] in
  // params() order and returns d(loss)/d(input).
  Matrix backward(const Cache& cache, const Matrix& d_out, std::vector<Matrix>& grads,
                  std::size_t offset = 0) const {
    const std::size_t L = weights_.size();
    Matrix delta = d_out;
    Matrix d_in;
    for (std::size_t l = L; l-- > 0;) {
      grads[offset + 2 * l] += delta.transpose() * cache.acts[l];
      grads[offset + 2 * l + 1].row(0) += delta.colwise().sum();
      Matrix back = delta * weights_[l];
      if (l > 0) {
        delta = back.cwiseProduct((cache.acts[l].array() > 0.0).cast<double>().matrix());
      } else {
        d_in = std::move(back);
      }
    }
    return d_in;
  }

  std::size_t n_params() const { return 2 * weights_.size(); }

  std::vector<Matrix*> params() {
    std::vector<Matrix*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    return out;
  }

  std::vector<const Matrix*> params() const {
    std::vector<const Matrix*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    return out;
  }

  // Rebuilds a network from stored layer parameters (used by persistence).
  static Mlp from_params(std::vector<Matrix> weights, std::vector<Matrix> biases) {
    if (weights.empty() || weights.size() != biases.size())
      throw ConfigError("Mlp::from_params: inconsistent layer lists");
    Mlp net;
    net.in_dim_ = weights.front().cols();
    net.out_dim_ = weights.back().rows();
    net.weights_ = std::move(weights);
    net.biases_ = std::move(biases);
    return net;
  }

 private:
  static Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform_in(-bound, bound);
    return w;
  }

  Eigen::Index in_dim_ = 0;
  Eigen::Index out_dim_ = 0;
  std::vector<Matrix> weights_;
  std::vector<Matrix> biases_;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Weighted binary cross entropy on logits: sum_i w_i * bce_i / sum_i w_i.
// Returns the loss; d_logits receives its gradient.
inline double weighted_bce(const Array& logits, const Array& targets, const Array& weights,
                           Array& d_logits) {
  const double wsum = weights.sum();
  if (!(wsum > 0.0)) throw NumericError("weighted_bce: weights sum to zero");
  double loss = 0.0;
  d_logits.resize(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double z = logits[i], y = targets[i], w = weights[i];
    loss += w * (log1pexp(z) - y * z);
    d_logits[i] = w * (sigmoid(z) - y) / wsum;
  }
  return loss / wsum;
}

}  // namespace fdre
