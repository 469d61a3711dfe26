#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdre/core.hpp"
#include "fdre/dre.hpp"
#include "fdre/featurize.hpp"
#include "fdre/flow.hpp"
#include "fdre/mlp.hpp"
#include "fdre/random.hpp"

namespace fdre {

using Json = nlohmann::json;

inline Json matrix_to_json(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
  j["data"] = std::move(data);
  return j;
}

inline Matrix matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw IngestError("matrix_from_json: size mismatch");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[k++];
  return m;
}

// Self-describing flow serialization: dims, orderings and hidden sizes are
// stored so the masks can be rebuilt; parameters are stored in params()
// order. JSON doubles round-trip exactly, so a reloaded model reproduces
// log_prob bit for bit.
inline Json flow_to_json(const FlowModel& flow) {
  Json j;
  j["type"] = "maf";
  j["dim"] = flow.dim();
  j["norms_initialized"] = flow.norms_initialized();
  j["blocks"] = Json::array();
  j["norms"] = Json::array();
  for (std::size_t b = 0; b < flow.n_blocks(); ++b) {
    const MadeBlock& blk = flow.blocks()[b];
    Json jb;
    jb["hidden"] = blk.hidden_sizes();
    jb["ordering"] = blk.ordering();
    jb["params"] = Json::array();
    for (const auto* p : blk.params()) jb["params"].push_back(matrix_to_json(*p));
    j["blocks"].push_back(std::move(jb));
    Json jn;
    jn["log_scale"] = matrix_to_json(flow.norms()[b].log_scale);
    jn["shift"] = matrix_to_json(flow.norms()[b].shift);
    j["norms"].push_back(std::move(jn));
  }
  return j;
}

inline FlowModel flow_from_json(const Json& j) {
  if (j.at("type").get<std::string>() != "maf")
    throw IngestError("flow_from_json: not a flow model blob");
  const auto dim = j.at("dim").get<Eigen::Index>();
  std::vector<MadeBlock> blocks;
  std::vector<AffineNorm> norms;
  Rng rng(0);  // placeholder init, overwritten below
  for (const auto& jb : j.at("blocks")) {
    MadeBlock blk(dim, jb.at("hidden").get<std::vector<Eigen::Index>>(),
                  jb.at("ordering").get<std::vector<Eigen::Index>>(), rng);
    auto params = blk.params();
    const auto& stored = jb.at("params");
    if (stored.size() != params.size())
      throw IngestError("flow_from_json: block parameter count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
      Matrix m = matrix_from_json(stored[k]);
      if (m.rows() != params[k]->rows() || m.cols() != params[k]->cols())
        throw IngestError("flow_from_json: block parameter shape mismatch");
      *params[k] = std::move(m);
    }
    blocks.push_back(std::move(blk));
  }
  for (const auto& jn : j.at("norms")) {
    AffineNorm norm(dim);
    norm.log_scale = matrix_from_json(jn.at("log_scale"));
    norm.shift = matrix_from_json(jn.at("shift"));
    norms.push_back(std::move(norm));
  }
  return FlowModel::from_parts(dim, std::move(blocks), std::move(norms),
                               j.at("norms_initialized").get<bool>());
}

inline Json mlp_to_json(const Mlp& net) {
  Json j;
  j["layers"] = Json::array();
  const auto params = net.params();
  for (std::size_t k = 0; k < params.size(); k += 2) {
    Json layer;
    layer["weight"] = matrix_to_json(*params[k]);
    layer["bias"] = matrix_to_json(*params[k + 1]);
    j["layers"].push_back(std::move(layer));
  }
  return j;
}

inline Mlp mlp_from_json(const Json& j) {
  std::vector<Matrix> weights, biases;
  for (const auto& layer : j.at("layers")) {
    weights.push_back(matrix_from_json(layer.at("weight")));
    biases.push_back(matrix_from_json(layer.at("bias")));
  }
  return Mlp::from_params(std::move(weights), std::move(biases));
}

inline Json estimator_to_json(const RatioEstimator& est) {
  Json j;
  switch (est.kind) {
    case DreKind::Classifier:
      j["kind"] = "classifier";
      j["net"] = mlp_to_json(est.net);
      j["prior_correction"] = est.prior_correction;
      break;
    case DreKind::Kliep:
      j["kind"] = "kliep";
      j["centers"] = matrix_to_json(est.centers);
      j["theta"] = matrix_to_json(est.theta);
      j["bandwidth"] = est.bandwidth;
      break;
    case DreKind::KmmTransductive:
      j["kind"] = "kmm";
      j["source_rows"] = matrix_to_json(est.source_rows);
      j["beta"] = matrix_to_json(est.beta);
      j["bandwidth"] = est.bandwidth;
      j["B"] = est.kmm_B;
      j["epsilon"] = est.kmm_epsilon;
      j["objective"] = est.kmm_objective;
      j["converged"] = est.kmm_converged;
      break;
  }
  return j;
}

inline RatioEstimator estimator_from_json(const Json& j) {
  RatioEstimator est;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "classifier") {
    est.kind = DreKind::Classifier;
    est.net = mlp_from_json(j.at("net"));
    est.prior_correction = j.at("prior_correction").get<double>();
  } else if (kind == "kliep") {
    est.kind = DreKind::Kliep;
    est.centers = matrix_from_json(j.at("centers"));
    est.theta = matrix_from_json(j.at("theta"));
    est.bandwidth = j.at("bandwidth").get<double>();
  } else if (kind == "kmm") {
    est.kind = DreKind::KmmTransductive;
    est.source_rows = matrix_from_json(j.at("source_rows"));
    est.beta = matrix_from_json(j.at("beta"));
    est.bandwidth = j.at("bandwidth").get<double>();
    est.kmm_B = j.at("B").get<double>();
    est.kmm_epsilon = j.at("epsilon").get<double>();
    est.kmm_objective = j.at("objective").get<double>();
    est.kmm_converged = j.at("converged").get<bool>();
  } else {
    throw IngestError("estimator_from_json: unknown kind '" + kind + "'");
  }
  return est;
}

inline Json featurized_to_json(const FeaturizedEstimator& est) {
  Json j;
  j["flow"] = flow_to_json(est.flow);
  j["base"] = estimator_to_json(est.base);
  j["manifest"] = {{"dp_hash", est.manifest.dp_hash}, {"dq_hash", est.manifest.dq_hash}};
  return j;
}

inline FeaturizedEstimator featurized_from_json(const Json& j) {
  FeaturizedEstimator est;
  est.flow = flow_from_json(j.at("flow"));
  est.base = estimator_from_json(j.at("base"));
  est.manifest.dp_hash = j.at("manifest").at("dp_hash").get<std::uint64_t>();
  est.manifest.dq_hash = j.at("manifest").at("dq_hash").get<std::uint64_t>();
  return est;
}

inline void save_json(const Json& j, const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw IngestError("save_json: cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("load_json: cannot open '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IngestError("load_json: parse failure in '" + path + "': " + e.what());
  }
  return j;
}

}  // namespace fdre
