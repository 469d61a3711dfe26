#pragma once

#include <cmath>
#include <vector>

#include "fdre/core.hpp"

namespace fdre {

// Adam with decoupled weight decay over an ordered list of parameter tensors.
// Moment decay 0.9/0.999, epsilon 1e-8.
class AdamW {
 public:
  AdamW(double learning_rate, double weight_decay)
      : lr_(learning_rate), wd_(weight_decay) {
    if (!(lr_ > 0.0)) throw ConfigError("AdamW: learning rate must be > 0");
  }

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(Matrix::Zero(p->rows(), p->cols()));
        v_.emplace_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      Matrix& p = *params[k];
      const Matrix& g = grads[k];
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseProduct(g);
      const Matrix mhat = m_[k] / bc1;
      const Matrix vhat = v_[k] / bc2;
      p.array() -= lr_ * (mhat.array() / (vhat.array().sqrt() + eps_) + wd_ * p.array());
    }
  }

 private:
  double lr_;
  double wd_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

inline std::vector<Matrix> zero_like(const std::vector<Matrix*>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto* p : params) out.emplace_back(Matrix::Zero(p->rows(), p->cols()));
  return out;
}

inline void accumulate(std::vector<Matrix>& into, const std::vector<Matrix>& grads,
                       double scale = 1.0) {
  for (std::size_t k = 0; k < into.size(); ++k) into[k] += scale * grads[k];
}

}  // namespace fdre
