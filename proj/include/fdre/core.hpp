#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdre {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Array = Eigen::ArrayXd;

// Error taxonomy. Configuration problems (bad specs, invalid hyperparameters)
// are distinct from data ingestion problems, numeric failures during
// evaluation, and training failures, so callers can map them to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IngestError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct TrainError : Error {
  using Error::Error;
};

struct QueryError : Error {
  using Error::Error;
};

// n x d table of real-valued samples, one row per sample.
struct DataMatrix {
  Matrix values;

  DataMatrix() = default;
  explicit DataMatrix(Matrix v) : values(std::move(v)) {}

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }

  void validate(const char* what = "DataMatrix") const {
    if (values.rows() < 1 || values.cols() < 1)
      throw ConfigError(std::string(what) + ": needs at least one row and one column");
    if (!values.allFinite())
      throw ConfigError(std::string(what) + ": contains non-finite values");
  }
};

struct LabeledData {
  DataMatrix features;
  std::vector<int> labels;  // empty when the data carries no labels

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index dim() const { return features.dim(); }

  void validate(const char* what = "LabeledData") const {
    features.validate(what);
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != features.rows())
      throw ConfigError(std::string(what) + ": label count does not match row count");
  }
};

// Stacks b on top of a; both must share the column count.
inline DataMatrix vstack(const DataMatrix& a, const DataMatrix& b) {
  if (a.dim() != b.dim()) throw ConfigError("vstack: dimension mismatch");
  Matrix out(a.rows() + b.rows(), a.dim());
  out.topRows(a.rows()) = a.values;
  out.bottomRows(b.rows()) = b.values;
  return DataMatrix(std::move(out));
}

inline DataMatrix take_rows(const DataMatrix& a, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.dim());
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = a.values.row(idx[i]);
  return DataMatrix(std::move(out));
}

// FNV-1a over the row-major byte stream; identifies datasets in manifests.
inline std::uint64_t hash_matrix(const Matrix& m) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(m.rows()));
  mix(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::uint64_t bits;
      const double v = m(i, j);
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      mix(bits);
    }
  return h;
}

}  // namespace fdre
