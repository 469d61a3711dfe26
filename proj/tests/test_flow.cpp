#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fdre/flow.hpp"
#include "fdre/io.hpp"
#include "fdre/stats.hpp"
#include "fdre/train.hpp"

using namespace fdre;

namespace {

std::vector<Eigen::Index> seq_ordering(Eigen::Index d) {
  std::vector<Eigen::Index> o(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) o[static_cast<std::size_t>(i)] = i;
  return o;
}

void randomize_params(FlowModel& flow, double scale, std::uint64_t seed) {
  Rng rng(seed);
  for (auto* p : flow.params())
    for (Eigen::Index i = 0; i < p->rows(); ++i)
      for (Eigen::Index j = 0; j < p->cols(); ++j)
        (*p)(i, j) = scale * rng.uniform_in(-1.0, 1.0);
}

// Central-difference Jacobian of the full forward map for one row.
Matrix fd_jacobian(const FlowModel& flow, const Vector& x, double eps) {
  const Eigen::Index d = x.size();
  Matrix jac(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Matrix xp = x.transpose(), xm = x.transpose();
    xp(0, j) += eps;
    xm(0, j) -= eps;
    const auto zp = flow.forward(DataMatrix(xp)).z.values;
    const auto zm = flow.forward(DataMatrix(xm)).z.values;
    jac.col(j) = (zp - zm).transpose() / (2.0 * eps);
  }
  return jac;
}

double mean_nll(const FlowModel& flow, const DataMatrix& x) {
  return -flow.log_prob(x).mean();
}

// One-sample Kolmogorov-Smirnov statistic against a normal CDF.
double ks_against_normal(Array samples, double mu, double sd) {
  std::vector<double> xs(samples.data(), samples.data() + samples.size());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-(xs[i] - mu) / (sd * std::numbers::sqrt2));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
    d = std::max(d, std::abs(static_cast<double>(i) / n - cdf));
  }
  return d;
}

}  // namespace

TEST_CASE("made: first coordinate head is input-independent") {
  Rng rng(1);
  MadeBlock blk(3, {8}, seq_ordering(3), rng);
  CHECK(blk.head_mask().row(0).sum() == 0.0);
  CHECK(blk.head_mask().row(2).sum() > 0.0);
}

TEST_CASE("made: mask shapes and binary entries") {
  Rng rng(2);
  MadeBlock blk(2, {4}, seq_ordering(2), rng);
  REQUIRE(blk.hidden_mask(0).rows() == 4);
  REQUIRE(blk.hidden_mask(0).cols() == 2);
  REQUIRE(blk.head_mask().rows() == 2);
  REQUIRE(blk.head_mask().cols() == 4);
  for (const Matrix* m : {&blk.hidden_mask(0), &blk.head_mask()})
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (Eigen::Index j = 0; j < m->cols(); ++j)
        CHECK((((*m)(i, j) == 0.0) || ((*m)(i, j) == 1.0)));
}

TEST_CASE("made: dim=1 with no hidden layers gives constant heads") {
  Rng rng(3);
  MadeBlock blk(1, {}, seq_ordering(1), rng);
  Matrix mu1, a1, mu2, a2;
  blk.heads(Matrix::Constant(1, 1, -4.0), mu1, a1);
  blk.heads(Matrix::Constant(1, 1, 9.0), mu2, a2);
  CHECK(mu1 == mu2);
  CHECK(a1 == a2);
}

TEST_CASE("made: finite-difference head Jacobian is strictly triangular") {
  const double eps = 1e-6;
  for (const Eigen::Index d : {2, 3, 5, 8}) {
    Rng rng(static_cast<std::uint64_t>(d));
    auto ordering = seq_ordering(d);
    if (d > 2) std::reverse(ordering.begin(), ordering.end());
    MadeBlock blk(d, {16}, ordering, rng);
    // random small parameters so heads are nontrivial
    for (auto* p : blk.params())
      for (Eigen::Index i = 0; i < p->rows(); ++i)
        for (Eigen::Index j = 0; j < p->cols(); ++j) (*p)(i, j) = 0.4 * rng.uniform_in(-1, 1);

    std::vector<Eigen::Index> pos(static_cast<std::size_t>(d));
    for (Eigen::Index t = 0; t < d; ++t) pos[static_cast<std::size_t>(ordering[t])] = t;

    const Matrix x0 = rng.gaussian_matrix(1, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) {
        if (pos[static_cast<std::size_t>(j)] < pos[static_cast<std::size_t>(i)]) continue;
        Matrix xp = x0, xm = x0;
        xp(0, j) += eps;
        xm(0, j) -= eps;
        Matrix mup, ap, mum, am;
        blk.heads(xp, mup, ap);
        blk.heads(xm, mum, am);
        CHECK(std::abs(mup(0, i) - mum(0, i)) / (2 * eps) < 1e-6);
        CHECK(std::abs(ap(0, i) - am(0, i)) / (2 * eps) < 1e-6);
      }
  }
}

TEST_CASE("flow: fresh model is the identity with zero logdet") {
  const FlowModel flow = FlowModel::build(3, 5, {10}, 4);
  Rng rng(9);
  const DataMatrix x(rng.gaussian_matrix(20, 3));
  const FlowForward fwd = flow.forward(x);
  CHECK((fwd.z.values - x.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(fwd.logdet.abs().maxCoeff() == 0.0);
  const DataMatrix back = flow.inverse(fwd.z);
  CHECK((back.values - x.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("flow: constant 1-D block computes the affine rule") {
  FlowModel flow = FlowModel::build(1, 1, {}, 0);
  // mu = 1, a = ln 2 as constants via the head biases
  auto params = flow.params();
  // params order: w_mu, b_mu, w_a, b_a, log_scale, shift
  *params[1] = Matrix::Constant(1, 1, 1.0);
  *params[3] = Matrix::Constant(1, 1, std::log(2.0));
  Matrix x(3, 1);
  x << 0.0, 1.0, 5.0;
  const FlowForward fwd = flow.forward(DataMatrix(x));
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(fwd.z.values(i, 0) == Catch::Approx((x(i, 0) - 1.0) / 2.0).epsilon(1e-12));
    CHECK(fwd.logdet[i] == Catch::Approx(-std::log(2.0)).epsilon(1e-12));
  }
  const DataMatrix back = flow.inverse(fwd.z);
  CHECK((back.values - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("flow: inverse(forward(x)) round trip under random parameters") {
  for (const Eigen::Index d : {1, 2, 4, 8}) {
    FlowModel flow = FlowModel::build(d, 3, {12}, 7);
    randomize_params(flow, 0.5, static_cast<std::uint64_t>(100 + d));
    Rng rng(static_cast<std::uint64_t>(d));
    const Matrix x = (10.0 * rng.gaussian_matrix(30, d).array().min(1.0).max(-1.0)).matrix();
    const FlowForward fwd = flow.forward(DataMatrix(x));
    const DataMatrix back = flow.inverse(fwd.z);
    CHECK((back.values - x).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("flow: log_prob of the identity model matches the standard normal") {
  const FlowModel flow2 = FlowModel::build(2, 2, {8}, 1);
  const Array lp2 = flow2.log_prob(DataMatrix(Matrix::Zero(1, 2)));
  CHECK(lp2[0] == Catch::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-12));

  const FlowModel flow1 = FlowModel::build(1, 2, {8}, 1);
  const Array lp1 = flow1.log_prob(DataMatrix(Matrix::Constant(1, 1, 1.0)));
  CHECK(lp1[0] ==
        Catch::Approx(-0.5 * std::log(2.0 * std::numbers::pi) - 0.5).epsilon(1e-12));
}

TEST_CASE("flow: analytic logdet matches finite-difference Jacobian determinant") {
  for (const Eigen::Index d : {1, 2, 3, 4}) {
    FlowModel flow = FlowModel::build(d, 3, {10}, 21);
    randomize_params(flow, 0.3, static_cast<std::uint64_t>(200 + d));
    Rng rng(static_cast<std::uint64_t>(50 + d));
    for (int trial = 0; trial < 3; ++trial) {
      const Vector x = rng.gaussian_matrix(1, d).transpose();
      const Matrix jac = fd_jacobian(flow, x, 1e-5);
      const double fd_logdet = std::log(std::abs(jac.determinant()));
      const double analytic = flow.forward(DataMatrix(Matrix(x.transpose()))).logdet[0];
      CHECK(std::abs(fd_logdet - analytic) < 1e-3);
    }
  }
}

TEST_CASE("flow: analytic NLL parameter gradients match central differences") {
  for (const Eigen::Index d : {1, 2, 3}) {
    FlowModel flow = FlowModel::build(d, 2, {6}, 5);
    randomize_params(flow, 0.4, static_cast<std::uint64_t>(300 + d));
    Rng rng(static_cast<std::uint64_t>(70 + d));
    const DataMatrix x(rng.gaussian_matrix(10, d));
    const double n = static_cast<double>(x.rows());

    FlowModel::Cache cache;
    const FlowForward fwd = flow.forward(x, &cache);
    auto params = flow.params();
    std::vector<Matrix> grads = zero_like(params);
    const Matrix d_z = fwd.z.values / n;
    const Array coeff = Array::Constant(x.rows(), -1.0 / n);
    flow.backward(cache, d_z, coeff, grads);

    const double eps = 1e-5;
    double max_rel = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      Matrix& p = *params[k];
      for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
          const double orig = p(i, j);
          p(i, j) = orig + eps;
          const double up = mean_nll(flow, x);
          p(i, j) = orig - eps;
          const double dn = mean_nll(flow, x);
          p(i, j) = orig;
          const double fd = (up - dn) / (2.0 * eps);
          const double an = grads[k](i, j);
          max_rel = std::max(max_rel,
                             std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)}));
        }
    }
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("flow: fit recovers a 1-D Gaussian") {
  Rng rng(33);
  const Matrix data = (rng.gaussian_matrix(2000, 1).array() * 2.0 + 3.0).matrix();

  FlowModel flow = FlowModel::build(1, 5, {100}, 12);
  FlowTrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 90;
  const FitTrace trace = fit_flow(flow, DataMatrix(data), cfg);

  REQUIRE(trace.val_loss.size() >= 2);
  CHECK(trace.val_loss[static_cast<std::size_t>(trace.best_epoch)] <= trace.val_loss[0]);

  const DataMatrix samples = flow.sample(10000, 4);
  const double m = samples.values.col(0).mean();
  const double v = variance(samples.values.col(0).array());
  CHECK(std::abs(m - 3.0) < 0.3);
  CHECK(std::abs(v - 4.0) < 0.4);

  // KS between model samples and N(3, 4)
  const DataMatrix s2 = flow.sample(5000, 8);
  CHECK(ks_against_normal(s2.values.col(0).array(), 3.0, 2.0) < 0.05);

  // exp(log_prob) integrates to one
  const Eigen::Index grid_n = 2001;
  Matrix grid(grid_n, 1);
  for (Eigen::Index i = 0; i < grid_n; ++i)
    grid(i, 0) = -15.0 + 36.0 * static_cast<double>(i) / static_cast<double>(grid_n - 1);
  const Array density = flow.log_prob(DataMatrix(grid)).exp();
  const double h = 36.0 / static_cast<double>(grid_n - 1);
  double integral = 0.0;
  for (Eigen::Index i = 0; i + 1 < grid_n; ++i)
    integral += 0.5 * h * (density[i] + density[i + 1]);
  CHECK(integral == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("flow: fit is deterministic per seed") {
  Rng rng(44);
  const DataMatrix data(rng.gaussian_matrix(300, 2));
  FlowTrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 50;
  cfg.seed = 17;

  FlowModel f1 = FlowModel::build(2, 3, {16}, 2);
  FlowModel f2 = FlowModel::build(2, 3, {16}, 2);
  fit_flow(f1, data, cfg);
  fit_flow(f2, data, cfg);
  const auto p1 = f1.params();
  const auto p2 = f2.params();
  for (std::size_t k = 0; k < p1.size(); ++k) CHECK(*p1[k] == *p2[k]);
}

TEST_CASE("flow: fit rejects too-small datasets") {
  FlowModel flow = FlowModel::build(2, 2, {8}, 0);
  FlowTrainConfig cfg;
  cfg.batch_size = 100;
  Rng rng(1);
  CHECK_THROWS_AS(fit_flow(flow, DataMatrix(rng.gaussian_matrix(50, 2)), cfg), ConfigError);
}

TEST_CASE("flow: identity-model samples are standard normal") {
  const FlowModel flow = FlowModel::build(2, 4, {10}, 3);
  const DataMatrix s = flow.sample(10000, 99);
  CHECK(std::abs(s.values.col(0).mean()) < 0.05);
  CHECK(std::abs(s.values.col(1).mean()) < 0.05);
  const DataMatrix s2 = flow.sample(10000, 99);
  CHECK(s.values == s2.values);  // reproducible
}

TEST_CASE("flow: serialization round-trips log_prob bit for bit") {
  FlowModel flow = FlowModel::build(3, 4, {24}, 5);
  randomize_params(flow, 0.5, 321);
  flow.set_norms_initialized(true);

  const Json blob = flow_to_json(flow);
  const std::string text = blob.dump();
  const FlowModel loaded = flow_from_json(Json::parse(text));

  Rng rng(6);
  const DataMatrix x(rng.gaussian_matrix(40, 3));
  const Array lp0 = flow.log_prob(x);
  const Array lp1 = loaded.log_prob(x);
  for (Eigen::Index i = 0; i < lp0.size(); ++i) CHECK(lp0[i] == lp1[i]);
  CHECK(loaded.norms_initialized());
}

TEST_CASE("flow: dimension mismatch raises a configuration error") {
  const FlowModel flow = FlowModel::build(3, 2, {8}, 0);
  Rng rng(0);
  CHECK_THROWS_AS(flow.forward(DataMatrix(rng.gaussian_matrix(5, 2))), ConfigError);
}
