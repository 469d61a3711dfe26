#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "fdre/csv.hpp"
#include "fdre/data.hpp"
#include "fdre/stats.hpp"

using namespace fdre;

namespace {

GaussianPairSpec toy_spec(double mp, double mq, Eigen::Index dim, Eigen::Index n,
                          std::uint64_t seed) {
  GaussianPairSpec s;
  s.dim = dim;
  s.mean_p = Vector::Constant(dim, mp);
  s.mean_q = Vector::Constant(dim, mq);
  s.n_per_side = n;
  s.seed = seed;
  return s;
}

struct TempCsv {
  std::string path;
  explicit TempCsv(const std::string& contents) {
    path = std::string("fdre_test_") + std::to_string(reinterpret_cast<std::uintptr_t>(this)) +
           ".csv";
    std::ofstream out(path);
    out << contents;
  }
  ~TempCsv() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("gen_gaussian_pair matches requested means") {
  GaussianPairSpec s;
  s.dim = 2;
  s.mean_p = Vector::Zero(2);
  s.mean_q = Vector::Constant(2, 3.0);
  s.n_per_side = 1000;
  s.seed = 7;
  const auto [p, q] = gen_gaussian_pair(s);
  REQUIRE(p.rows() == 1000);
  REQUIRE(q.dim() == 2);
  for (Eigen::Index j = 0; j < 2; ++j) {
    CHECK(std::abs(p.values.col(j).mean()) < 0.15);
    CHECK(std::abs(q.values.col(j).mean() - 3.0) < 0.15);
  }
}

TEST_CASE("gen_gaussian_pair p=q draws from one density") {
  const auto s = toy_spec(0.0, 0.0, 1, 10, 3);
  const auto [p, q] = gen_gaussian_pair(s);
  REQUIRE(p.rows() == 10);
  REQUIRE(q.rows() == 10);
  CHECK(p.values.allFinite());
  CHECK(q.values.allFinite());
}

TEST_CASE("gen_gaussian_pair is deterministic per seed") {
  const auto s = toy_spec(1.0, -1.0, 3, 50, 123);
  const auto [p1, q1] = gen_gaussian_pair(s);
  const auto [p2, q2] = gen_gaussian_pair(s);
  CHECK(p1.values == p2.values);
  CHECK(q1.values == q2.values);
}

TEST_CASE("gen_gaussian_pair sample covariance approaches identity") {
  for (const Eigen::Index dim : {1, 2, 4}) {
    const auto s = toy_spec(0.0, 0.0, dim, 10000, 11);
    const auto [p, q] = gen_gaussian_pair(s);
    const Matrix centered = p.values.rowwise() - p.values.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(p.rows());
    CHECK((cov - Matrix::Identity(dim, dim)).norm() < 0.1);
  }
}

TEST_CASE("gen_gaussian_pair rejects invalid specs") {
  GaussianPairSpec s;
  s.dim = 2;
  s.mean_p = Vector::Zero(3);  // wrong length
  s.mean_q = Vector::Zero(2);
  s.n_per_side = 10;
  CHECK_THROWS_AS(gen_gaussian_pair(s), ConfigError);
}

TEST_CASE("gen_mixture_da component counts and mirroring") {
  const auto [source, target] = gen_mixture_da(1000, 0.01, 42);
  long src_ones = 0, tgt_ones = 0;
  for (const int y : source.labels) src_ones += y;
  for (const int y : target.labels) tgt_ones += y;
  CHECK(src_ones == 10);
  CHECK(tgt_ones == 990);
  REQUIRE(source.rows() == 1000);
  REQUIRE(source.dim() == 2);

  // label-1 rows come from N(0,I), label-0 rows from N([3,3],I)
  Vector sum1 = Vector::Zero(2);
  for (Eigen::Index i = 0; i < target.rows(); ++i)
    if (target.labels[static_cast<std::size_t>(i)] == 1)
      sum1 += target.features.values.row(i).transpose();
  CHECK((sum1 / static_cast<double>(tgt_ones)).norm() < 0.2);
}

TEST_CASE("gen_mixture_da symmetric mixture") {
  const auto [source, target] = gen_mixture_da(400, 0.5, 9);
  long src_ones = 0, tgt_ones = 0;
  for (const int y : source.labels) src_ones += y;
  for (const int y : target.labels) tgt_ones += y;
  CHECK(src_ones == 200);
  CHECK(tgt_ones == 200);
}

TEST_CASE("gen_mixture_da deterministic per seed") {
  const auto [s1, t1] = gen_mixture_da(100, 0.2, 5);
  const auto [s2, t2] = gen_mixture_da(100, 0.2, 5);
  CHECK(s1.features.values == s2.features.values);
  CHECK(s1.labels == s2.labels);
  CHECK(t1.features.values == t2.features.values);
}

TEST_CASE("gen_correlated_gaussians hits the requested correlation") {
  const auto [joint, marg] = gen_correlated_gaussians(1, 0.9, 10000, 17);
  REQUIRE(joint.dim() == 2);
  REQUIRE(marg.dim() == 2);
  const double r = pearson(joint.values.col(0).array(), joint.values.col(1).array());
  CHECK(std::abs(r - 0.9) < 0.03);
  // marginal set should carry no correlation
  const double rm = pearson(marg.values.col(0).array(), marg.values.col(1).array());
  CHECK(std::abs(rm) < 0.05);
}

TEST_CASE("gen_correlated_gaussians rho=0 gives independent halves") {
  const auto [joint, marg] = gen_correlated_gaussians(2, 0.0, 8000, 21);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double r =
        pearson(joint.values.col(j).array(), joint.values.col(2 + j).array());
    CHECK(std::abs(r) < 0.05);
  }
}

TEST_CASE("correlated Gaussian ground-truth MI anchor") {
  // -(d/2) log(1 - rho^2); the d=20, rho=0.9 anchor used downstream
  const double mi20 = -10.0 * std::log(1.0 - 0.81);
  CHECK(std::abs(mi20 - 16.67) < 0.1);
  CHECK_THROWS_AS(gen_correlated_gaussians(1, 1.0, 100, 0), ConfigError);
}

TEST_CASE("load_csv parses features and labels") {
  TempCsv f("a,b,y\n1.5,2.0,1\n-0.5,3.25,0\n0,1e-3,1\n");
  const LabeledData d = load_csv(f.path, "y");
  REQUIRE(d.rows() == 3);
  REQUIRE(d.dim() == 2);
  CHECK(d.features.values(0, 0) == 1.5);
  CHECK(d.features.values(2, 1) == 1e-3);
  CHECK(d.labels == std::vector<int>{1, 0, 1});
}

TEST_CASE("load_csv without label column") {
  TempCsv f("a,b\n1,2\n3,4\n");
  const LabeledData d = load_csv(f.path);
  CHECK(d.labels.empty());
  CHECK(d.dim() == 2);
}

TEST_CASE("load_csv names the bad cell") {
  TempCsv f("a,b\n1,abc\n");
  try {
    load_csv(f.path);
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("abc") != std::string::npos);
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("'b'") != std::string::npos);
  }
  CHECK_THROWS_AS(load_csv("does_not_exist.csv"), IngestError);
  TempCsv g("a,b\n1,2\n");
  CHECK_THROWS_AS(load_csv(g.path, "missing"), IngestError);
}

TEST_CASE("standardize on a simple column") {
  Matrix m(3, 1);
  m << 1, 2, 3;
  const auto [out, rec] = standardize(DataMatrix(m));
  const double e = 1.0 / std::sqrt(2.0 / 3.0);
  CHECK(out.values(0, 0) == Catch::Approx(-e).margin(1e-4));
  CHECK(out.values(1, 0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(out.values(2, 0) == Catch::Approx(e).margin(1e-4));
  CHECK(rec.mean[0] == Catch::Approx(2.0));
}

TEST_CASE("standardize is idempotent on standardized data") {
  Rng rng(4);
  DataMatrix d(rng.gaussian_matrix(200, 3));
  const auto [once, rec1] = standardize(d);
  const auto [twice, rec2] = standardize(once);
  CHECK((twice.values - once.values).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("standardize leaves constant columns unchanged with unit scale") {
  Matrix m(4, 2);
  m.col(0) << 1, 2, 3, 4;
  m.col(1).setConstant(5.0);
  const auto [out, rec] = standardize(DataMatrix(m));
  CHECK(rec.scale[1] == 1.0);
  CHECK((out.values.col(1).array() == 0.0).all());  // mean removed, scale 1
}

TEST_CASE("standardize round-trips through unstandardize") {
  Rng rng(8);
  DataMatrix d(rng.gaussian_matrix(50, 4));
  d.values.col(2).setConstant(3.0);
  const auto [out, rec] = standardize(d);
  const DataMatrix back = unstandardize(out, rec);
  CHECK((back.values - d.values).cwiseAbs().maxCoeff() < 1e-9);
  const DataMatrix again = apply_standardize(d, rec);
  CHECK((again.values - out.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("biased_subsample label bias keeps the requested fractions") {
  Rng rng(31);
  LabeledData d;
  d.features = DataMatrix(rng.gaussian_matrix(1000, 2));
  d.labels.resize(1000);
  for (std::size_t i = 0; i < 1000; ++i) d.labels[i] = i < 500 ? 1 : 0;

  BiasSpec spec;
  spec.scheme = BiasScheme::LabelBias;
  spec.keep_prob_pos = 0.1;
  spec.keep_prob_neg = 0.9;
  const LabeledData out = biased_subsample(d, spec, 77);
  long pos = 0, neg = 0;
  for (const int y : out.labels) (y == 1 ? pos : neg) += 1;
  CHECK(pos > 25);
  CHECK(pos < 80);
  CHECK(neg > 400);
  CHECK(neg < 495);
}

TEST_CASE("biased_subsample with unit keep probabilities is the identity") {
  Rng rng(5);
  LabeledData d;
  d.features = DataMatrix(rng.gaussian_matrix(40, 2));
  d.labels.assign(40, 1);
  BiasSpec spec;  // defaults keep everything
  const LabeledData out = biased_subsample(d, spec, 3);
  CHECK(out.features.values == d.features.values);
  CHECK(out.labels == d.labels);
}

TEST_CASE("biased_subsample distance bias pulls the sample toward the centroid") {
  Rng rng(13);
  LabeledData d;
  d.features = DataMatrix(rng.gaussian_matrix(500, 2) * 3.0);
  BiasSpec spec;
  spec.scheme = BiasScheme::DistanceBias;
  spec.sigma = 1.0 / 20.0;

  const Vector centroid = d.features.values.colwise().mean();
  const double before =
      (d.features.values.rowwise() - centroid.transpose()).rowwise().norm().mean();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LabeledData out = biased_subsample(d, spec, seed);
    const double after =
        (out.features.values.rowwise() - centroid.transpose()).rowwise().norm().mean();
    CHECK(after < before);
  }
}

TEST_CASE("biased_subsample output rows are input rows") {
  Rng rng(2);
  LabeledData d;
  d.features = DataMatrix(rng.gaussian_matrix(100, 3));
  d.labels.resize(100);
  for (std::size_t i = 0; i < 100; ++i) d.labels[i] = static_cast<int>(i % 2);
  BiasSpec spec;
  spec.keep_prob_pos = 0.3;
  spec.keep_prob_neg = 0.7;
  const LabeledData out = biased_subsample(d, spec, 5);
  REQUIRE(out.rows() >= 1);
  // every output row must appear in the input (subset with preserved identity)
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    bool found = false;
    for (Eigen::Index j = 0; j < d.rows(); ++j)
      if (out.features.values.row(i) == d.features.values.row(j)) {
        found = true;
        break;
      }
    CHECK(found);
  }
  // deterministic per seed
  const LabeledData out2 = biased_subsample(d, spec, 5);
  CHECK(out.features.values == out2.features.values);
}

TEST_CASE("biased_subsample requires binary labels for label bias") {
  LabeledData d;
  d.features = DataMatrix(Matrix::Ones(3, 1));
  d.labels = {0, 1, 2};
  BiasSpec spec;
  spec.keep_prob_pos = 0.5;
  CHECK_THROWS_AS(biased_subsample(d, spec, 0), ConfigError);
}
