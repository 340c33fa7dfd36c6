#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "support/corpus.hpp"
#include "xtalgen/core/errors.hpp"
#include "xtalgen/lattice/lattice_generator.hpp"

using namespace xtalgen;

namespace {

MatrixX gaussian_cloud(Rng& rng, int m, const VectorX& mean, double sd) {
  MatrixX x(m, mean.size());
  for (int i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < mean.size(); ++j) x(i, j) = mean(j) + sd * rng.normal();
  }
  return x;
}

GaussianMixture<double> point_mass(const Mat3& rows, double var) {
  VectorX mu = flatten_lattice(Lattice(rows));
  return GaussianMixture<double>(VectorX::Ones(1), {mu}, {var * MatrixX::Identity(9, 9)});
}

// Bivariate normal density written out by hand.
double bivariate_pdf(double x, double y, double mx, double my, double sxx, double sxy, double syy) {
  const double det = sxx * syy - sxy * sxy;
  const double dx = x - mx, dy = y - my;
  const double q = (syy * dx * dx - 2 * sxy * dx * dy + sxx * dy * dy) / det;
  return std::exp(-0.5 * q) / (2 * M_PI * std::sqrt(det));
}

double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2 * M_PI * var);
}

}  // namespace

TEST_CASE("fit_em K=1 equals the single-Gaussian MLE") {
  Rng rng(5);
  VectorX mean(4);
  mean << 1, -2, 3, 0.5;
  MatrixX x = gaussian_cloud(rng, 200, mean, 0.7);
  x.col(1) += 0.4 * x.col(0);
  EmOptions opt;
  opt.components = 1;
  const auto fit = fit_em<double>(x, opt);

  VectorX mu = VectorX::Zero(4);
  for (int i = 0; i < x.rows(); ++i) mu += x.row(i).transpose();
  mu /= x.rows();
  MatrixX cov = MatrixX::Zero(4, 4);
  for (int i = 0; i < x.rows(); ++i) {
    const VectorX d = x.row(i).transpose() - mu;
    cov += d * d.transpose();
  }
  cov /= x.rows();
  cov.diagonal().array() += 1e-6;

  CHECK((fit.mixture.means()[0] - mu).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((fit.mixture.covariances()[0] - cov).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(fit.mixture.weights()(0) == doctest::Approx(1.0));
}

TEST_CASE("fit_em log-likelihood is monotone") {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(100 + trial);
    const int d = 2 + trial % 8;
    const int k = 1 + trial % 5;
    MatrixX x(60 + 7 * trial, d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double shift = 4.0 * static_cast<double>(rng.uniform_index(3));
      for (int j = 0; j < d; ++j) x(i, j) = shift + rng.normal() * (1 + 0.3 * j);
    }
    EmOptions opt;
    opt.components = k;
    opt.seed = static_cast<std::uint64_t>(trial);
    const auto fit = fit_em<double>(x, opt);
    REQUIRE(fit.log_likelihood_trace.size() >= 2);
    for (std::size_t i = 1; i < fit.log_likelihood_trace.size(); ++i) {
      CHECK(fit.log_likelihood_trace[i] >= fit.log_likelihood_trace[i - 1] - 1e-8);
    }
  }
}

TEST_CASE("fit_em recovers two separated clusters") {
  Rng rng(9);
  const int d = 9;
  MatrixX a = gaussian_cloud(rng, 3000, VectorX::Zero(d), 1.0);
  MatrixX b = gaussian_cloud(rng, 3000, VectorX::Constant(d, 10.0), 1.0);
  MatrixX x(6000, d);
  x << a, b;
  EmOptions opt;
  opt.components = 2;
  const auto fit = fit_em<double>(x, opt);
  const auto& m = fit.mixture.means();
  const bool first_is_zero = m[0].norm() < m[1].norm();
  const VectorX& zero = first_is_zero ? m[0] : m[1];
  const VectorX& ten = first_is_zero ? m[1] : m[0];
  CHECK(zero.cwiseAbs().maxCoeff() < 0.1);
  CHECK((ten.array() - 10.0).abs().maxCoeff() < 0.1);
  CHECK(fit.mixture.weights().sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit_em identical samples hit the covariance floor") {
  MatrixX x = MatrixX::Constant(10, 3, 2.5);
  EmOptions opt;
  opt.components = 2;
  const auto fit = fit_em<double>(x, opt);
  for (int k = 0; k < fit.mixture.components(); ++k) {
    Eigen::SelfAdjointEigenSolver<MatrixX> es(fit.mixture.covariances()[static_cast<std::size_t>(k)]);
    CHECK(es.eigenvalues().minCoeff() >= 1e-6 * (1 - 1e-9));
  }
}

TEST_CASE("fit_em rejects bad input") {
  EmOptions opt;
  opt.components = 5;
  CHECK_THROWS_AS(fit_em<double>(MatrixX::Zero(3, 2), opt), ConfigError);
  opt.components = 1;
  MatrixX bad = MatrixX::Zero(3, 2);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(fit_em<double>(bad, opt), ConfigError);
}

TEST_CASE("fit_em is deterministic for a seed") {
  Rng rng(2);
  MatrixX x = gaussian_cloud(rng, 80, VectorX::Zero(3), 1.0);
  EmOptions opt;
  opt.components = 3;
  opt.seed = 4;
  const auto a = fit_em<double>(x, opt);
  const auto b = fit_em<double>(x, opt);
  for (int k = 0; k < 3; ++k) CHECK((a.mixture.means()[k] - b.mixture.means()[k]).norm() == 0.0);
}

TEST_CASE("condition: diagonal covariance leaves the marginal") {
  VectorX mu(3);
  mu << 1, 2, 3;
  MatrixX cov = VectorX((VectorX(3) << 0.5, 2.0, 3.0).finished()).asDiagonal();
  GaussianMixture<double> g(VectorX::Ones(1), {mu}, {cov});
  const std::vector<int> obs{1};
  const auto c = condition<double>(g, obs, VectorX::Constant(1, 7.0));
  REQUIRE(c.dim() == 2);
  CHECK(c.means()[0](0) == doctest::Approx(1.0));
  CHECK(c.means()[0](1) == doctest::Approx(3.0));
  CHECK(c.covariances()[0](0, 0) == doctest::Approx(0.5));
  CHECK(c.covariances()[0](1, 1) == doctest::Approx(3.0));
  CHECK(c.weights()(0) == doctest::Approx(1.0));
}

TEST_CASE("condition: bivariate against grid integration") {
  const double mx = 0.7, my = -1.2, sxx = 1.5, sxy = 0.8, syy = 2.0;
  VectorX mu(2);
  mu << mx, my;
  MatrixX cov(2, 2);
  cov << sxx, sxy, sxy, syy;
  GaussianMixture<double> g(VectorX::Ones(1), {mu}, {cov});
  for (double y : {-3.0, -1.2, 0.4, 2.5}) {
    const std::vector<int> obs{1};
    const auto c = condition<double>(g, obs, VectorX::Constant(1, y));
    double z = 0, m1 = 0, m2 = 0;
    const double h = 1e-3;
    for (double x = mx - 12; x <= mx + 12; x += h) {
      const double p = bivariate_pdf(x, y, mx, my, sxx, sxy, syy);
      z += p;
      m1 += p * x;
      m2 += p * x * x;
    }
    const double mean = m1 / z;
    const double var = m2 / z - mean * mean;
    CHECK(std::abs(c.means()[0](0) - mean) < 1e-2);
    CHECK(std::abs(c.covariances()[0](0, 0) - var) < 1e-2);
  }
}

TEST_CASE("condition: mixture weights follow likelihood ratios") {
  VectorX w(2);
  w << 0.3, 0.7;
  VectorX m0(2), m1(2);
  m0 << 0, 0;
  m1 << 10, 10;
  MatrixX c0(2, 2), c1(2, 2);
  c0 << 1.0, 0.3, 0.3, 1.2;
  c1 << 0.8, -0.2, -0.2, 0.9;
  GaussianMixture<double> g(w, {m0, m1}, {c0, c1});
  const std::vector<int> obs{1};
  for (double y : {0.2, 3.0, 5.0, 7.0, 9.5}) {
    const auto c = condition<double>(g, obs, VectorX::Constant(1, y));
    const double l0 = 0.3 * normal_pdf(y, 0.0, 1.2);
    const double l1 = 0.7 * normal_pdf(y, 10.0, 0.9);
    CHECK(std::abs(c.weights()(0) - l0 / (l0 + l1)) < 1e-9);
    CHECK(std::abs(c.weights()(1) - l1 / (l0 + l1)) < 1e-9);
  }
  const auto near = condition<double>(g, obs, VectorX::Constant(1, 0.1));
  CHECK(near.weights()(0) > 0.99);
}

TEST_CASE("condition: errors") {
  VectorX mu = VectorX::Zero(2);
  MatrixX cov(2, 2);
  cov << 1, 0, 0, 1;
  GaussianMixture<double> g(VectorX::Ones(1), {mu}, {cov});
  std::vector<int> both{0, 1};
  CHECK_THROWS_AS(condition<double>(g, both, VectorX::Zero(2)), ShapeError);
  std::vector<int> out_of_range{2};
  CHECK_THROWS_AS(condition<double>(g, out_of_range, VectorX::Zero(1)), ShapeError);
  std::vector<int> one{0};
  CHECK_THROWS_AS(condition<double>(g, one, VectorX::Constant(1, std::nan(""))), ConditioningError);
}

TEST_CASE("sample_lattice volume bound") {
  Rng rng(1);
  SUBCASE("diag(5,5,5) accepted") {
    const Lattice l = sample_lattice(point_mass(5.0 * Mat3::Identity(), 1e-8), rng);
    CHECK(l.volume() == doctest::Approx(125.0).epsilon(1e-3));
  }
  SUBCASE("diag(1,1,1) exhausts attempts") {
    CHECK_THROWS_AS(sample_lattice(point_mass(Mat3::Identity(), 1e-8), rng), SamplingError);
  }
  SUBCASE("fitted model never returns small cells") {
    LatticeFitOptions opt;
    opt.em.components = 4;
    std::vector<Lattice> lats;
    for (const auto& r : testing::toy_corpus().records) lats.push_back(r.crystal.lattice());
    const auto gen = LatticeGenerator::fit(lats, opt);
    int small = 0;
    for (int i = 0; i < 1000; ++i) small += gen.sample(rng).volume() < kMinCellVolume;
    CHECK(small == 0);
  }
}

TEST_CASE("sample_lattice returns the canonical chart") {
  Rng rng(3);
  const Lattice l = sample_lattice(point_mass(4.0 * Mat3::Identity(), 0.05), rng);
  CHECK(std::abs(l.rows()(0, 1)) < 1e-12);
  CHECK(std::abs(l.rows()(0, 2)) < 1e-12);
  CHECK(std::abs(l.rows()(1, 2)) < 1e-12);
  CHECK(l.rows()(0, 0) > 0);
  CHECK(l.rows()(1, 1) > 0);
  CHECK(l.rows()(2, 2) > 0);
}

TEST_CASE("sampling is reproducible for a seed") {
  const auto g = point_mass(4.0 * Mat3::Identity(), 0.1);
  Rng a(77), b(77);
  for (int i = 0; i < 10; ++i) CHECK((sample_lattice(g, a).rows() - sample_lattice(g, b).rows()).norm() == 0.0);
}

TEST_CASE("LatticeGenerator with conditions") {
  Rng rng(4);
  std::vector<Lattice> lats;
  MatrixX props(40, 1);
  for (int i = 0; i < 40; ++i) {
    const double a = i < 20 ? 4.0 + 0.05 * rng.normal() : 7.0 + 0.05 * rng.normal();
    lats.push_back(Lattice::cubic(a));
    props(i, 0) = i < 20 ? 1.0 + 0.01 * rng.normal() : 5.0 + 0.01 * rng.normal();
  }
  LatticeFitOptions opt;
  opt.em.components = 2;
  const auto gen = LatticeGenerator::fit(lats, opt, {"band_gap"}, props);
  CHECK(gen.mixture().dim() == 10);
  const Lattice small = gen.sample(rng, VectorX::Constant(1, 1.0));
  const Lattice large = gen.sample(rng, VectorX::Constant(1, 5.0));
  CHECK(small.volume() == doctest::Approx(64.0).epsilon(0.1));
  CHECK(large.volume() == doctest::Approx(343.0).epsilon(0.1));
  CHECK(gen.lattice_mixture().dim() == 9);
  CHECK_THROWS_AS(gen.lattice_mixture(VectorX::Zero(2)), ConfigError);
}

TEST_CASE("LatticeGenerator save and load") {
  LatticeFitOptions opt;
  opt.em.components = 3;
  std::vector<Lattice> lats;
  for (const auto& r : testing::toy_corpus().records) lats.push_back(r.crystal.lattice());
  const auto gen = LatticeGenerator::fit(lats, opt);
  const auto path = std::filesystem::temp_directory_path() / "xtalgen_lattice_test.json";
  gen.save(path);
  const auto back = LatticeGenerator::load(path);
  std::filesystem::remove(path);
  REQUIRE(back.mixture().components() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK((back.mixture().means()[k] - gen.mixture().means()[k]).norm() == 0.0);
    CHECK((back.mixture().covariances()[k] - gen.mixture().covariances()[k]).norm() == 0.0);
  }
  CHECK(back.canonicalized());
  Rng a(8), b(8);
  CHECK((gen.sample(a).rows() - back.sample(b).rows()).norm() == 0.0);
  CHECK_THROWS_AS(LatticeGenerator::from_json(nlohmann::json{{"format", "other"}, {"version", 1}}), ParseError);
}
