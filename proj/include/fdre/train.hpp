#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "fdre/core.hpp"
#include "fdre/flow.hpp"
#include "fdre/mlp.hpp"
#include "fdre/optim.hpp"
#include "fdre/random.hpp"

namespace fdre {

struct FlowTrainConfig {
  long epochs = 100;
  Eigen::Index batch_size = 100;
  double learning_rate = 1e-4;
  double weight_decay = 1e-6;
  std::uint64_t seed = 0;
  long early_stop_patience = 0;  // 0 disables early stopping; best params kept either way
  double validation_fraction = 0.1;

  void validate() const {
    if (epochs < 0) throw ConfigError("FlowTrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("FlowTrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("FlowTrainConfig: learning_rate must be > 0");
    if (weight_decay < 0.0) throw ConfigError("FlowTrainConfig: weight_decay must be >= 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw ConfigError("FlowTrainConfig: validation_fraction must be in (0,1)");
  }
};

struct FitTrace {
  std::vector<double> train_loss;  // per epoch, mean over batches
  std::vector<double> val_loss;    // index 0 is the pre-training loss
  long best_epoch = 0;
};

namespace detail {

inline Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& idx,
                          std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i)
    out.row(static_cast<Eigen::Index>(i - begin)) = m.row(idx[i]);
  return out;
}

}  // namespace detail

// One optimization loop shared by maximum-likelihood flow training (alpha=0,
// no classifier) and hybrid training: the batch loss is
//   alpha * BCE(classifier(f(x)), y) + (1-alpha) * mean flow NLL.
// Validation uses the same composite loss; the parameters with the best
// validation loss are restored at the end.
inline FitTrace train_flow_mixture(FlowModel& flow, Mlp* classifier, double alpha,
                                   const DataMatrix& data, const std::vector<int>& labels,
                                   const FlowTrainConfig& cfg) {
  cfg.validate();
  data.validate("train_flow_mixture");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("train_flow_mixture: alpha must be in [0,1]");
  if (alpha > 0.0 && classifier == nullptr)
    throw ConfigError("train_flow_mixture: alpha > 0 requires a classifier");
  if (classifier != nullptr && static_cast<Eigen::Index>(labels.size()) != data.rows())
    throw ConfigError("train_flow_mixture: labels must match rows");
  if (data.rows() < cfg.batch_size)
    throw ConfigError("train_flow_mixture: need at least batch_size rows");

  FitTrace trace;
  if (cfg.epochs == 0) return trace;

  const Eigen::Index n = data.rows();
  const double dim = static_cast<double>(data.dim());
  Rng rng(cfg.seed);

  auto split = rng.permutation(n);
  const auto n_val = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * cfg.validation_fraction)));
  if (n_val >= n) throw ConfigError("train_flow_mixture: validation split leaves no train rows");
  std::vector<Eigen::Index> val_idx(split.begin(), split.begin() + n_val);
  std::vector<Eigen::Index> train_idx(split.begin() + n_val, split.end());

  const Matrix val_x = detail::gather_rows(data.values, val_idx, 0, val_idx.size());
  Array val_y(static_cast<Eigen::Index>(val_idx.size()));
  if (classifier)
    for (std::size_t i = 0; i < val_idx.size(); ++i)
      val_y[static_cast<Eigen::Index>(i)] =
          static_cast<double>(labels[static_cast<std::size_t>(val_idx[i])]);

  std::vector<Matrix*> params = flow.params();
  if (classifier)
    for (auto* p : classifier->params()) params.push_back(p);
  AdamW opt(cfg.learning_rate, cfg.weight_decay);

  if (!flow.norms_initialized()) {
    const std::size_t first = std::min<std::size_t>(train_idx.size(),
                                                    static_cast<std::size_t>(cfg.batch_size));
    flow.init_norms_from_batch(detail::gather_rows(data.values, train_idx, 0, first));
  }

  auto eval_loss = [&](const Matrix& x, const Array& y) {
    const FlowForward fwd = flow.forward(DataMatrix(x));
    const Array nll = 0.5 * fwd.z.values.rowwise().squaredNorm().array() +
                      0.5 * dim * std::log(2.0 * std::numbers::pi) - fwd.logdet;
    double loss = 0.0;
    if (alpha < 1.0) loss += (1.0 - alpha) * nll.mean();
    if (classifier) {
      const Array logits = classifier->forward(fwd.z.values).col(0).array();
      Array d_unused;
      loss += alpha * weighted_bce(logits, y, Array::Ones(logits.size()), d_unused);
    }
    return loss;
  };

  double best_val = eval_loss(val_x, val_y);
  trace.val_loss.push_back(best_val);
  trace.best_epoch = 0;
  std::vector<Matrix> best_params;
  for (const auto* p : params) best_params.push_back(*p);
  long since_best = 0;

  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // In-place Fisher-Yates on the train indices.
    for (std::size_t i = train_idx.size(); i-- > 1;) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(i + 1));
      std::swap(train_idx[i], train_idx[j]);
    }

    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(train_idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const Matrix bx = detail::gather_rows(data.values, train_idx, start, stop);
      const auto nb = static_cast<double>(bx.rows());

      FlowModel::Cache cache;
      const FlowForward fwd = flow.forward(DataMatrix(bx), &cache);

      double loss = 0.0;
      Matrix d_z = Matrix::Zero(bx.rows(), bx.cols());
      Array logdet_coeff = Array::Zero(bx.rows());
      std::vector<Matrix> grads = zero_like(params);

      if (alpha < 1.0) {
        const Array nll = 0.5 * fwd.z.values.rowwise().squaredNorm().array() +
                          0.5 * dim * std::log(2.0 * std::numbers::pi) - fwd.logdet;
        loss += (1.0 - alpha) * nll.mean();
        d_z += (1.0 - alpha) / nb * fwd.z.values;
        logdet_coeff -= (1.0 - alpha) / nb;
      }
      if (classifier) {
        Array by(bx.rows());
        for (std::size_t i = start; i < stop; ++i)
          by[static_cast<Eigen::Index>(i - start)] =
              static_cast<double>(labels[static_cast<std::size_t>(train_idx[i])]);
        Mlp::Cache ccache;
        const Array logits = classifier->forward(fwd.z.values, &ccache).col(0).array();
        Array d_logits;
        loss += alpha * weighted_bce(logits, by, Array::Ones(logits.size()), d_logits);
        const Matrix d_out = (alpha * d_logits).matrix();
        d_z += classifier->backward(ccache, d_out, grads, flow.n_params());
      }
      if (!std::isfinite(loss))
        throw TrainError("train_flow_mixture: non-finite loss at epoch " +
                         std::to_string(epoch));

      flow.backward(cache, d_z, logdet_coeff, grads);
      opt.step(params, grads);
      epoch_loss += loss;
      ++n_batches;
    }
    trace.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));

    const double val = eval_loss(val_x, val_y);
    if (!std::isfinite(val))
      throw TrainError("train_flow_mixture: non-finite validation loss at epoch " +
                       std::to_string(epoch));
    trace.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      trace.best_epoch = epoch;
      for (std::size_t k = 0; k < params.size(); ++k) best_params[k] = *params[k];
      since_best = 0;
    } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
      break;
    }
  }

  for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best_params[k];
  return trace;
}

// Maximum-likelihood fit of the flow on unlabeled data.
inline FitTrace fit_flow(FlowModel& flow, const DataMatrix& data, const FlowTrainConfig& cfg) {
  return train_flow_mixture(flow, nullptr, 0.0, data, {}, cfg);
}

}  // namespace fdre
