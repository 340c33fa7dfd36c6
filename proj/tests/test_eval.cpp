#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "support/corpus.hpp"
#include "xtalgen/core/errors.hpp"
#include "xtalgen/eval/metrics.hpp"

using namespace xtalgen;

namespace {

double kl2(const VectorX& p, const VectorX& q) {
  double s = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0) s += p(i) * std::log2(p(i) / q(i));
  }
  return s;
}

double js_distance_oracle(VectorX p, VectorX q) {
  p /= p.sum();
  q /= q.sum();
  const VectorX m = 0.5 * (p + q);
  return std::sqrt(0.5 * kl2(p, m) + 0.5 * kl2(q, m));
}

Crystal transformed(const Crystal& c, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(c.size());
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  Eigen::RowVector3d shift(rng.uniform(), rng.uniform(), rng.uniform());
  Coords x(n, 3);
  std::vector<std::string> species;
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = c.frac_coords().row(perm[static_cast<std::size_t>(i)]) + shift;
    species.push_back(c.species()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }
  return Crystal(Lattice(c.lattice().rows() * testing::random_rotation(rng).transpose()), species, wrap_frac(x));
}

}  // namespace

TEST_CASE("is_valid examples") {
  const auto& table = ElementTable::builtin();
  CHECK(is_valid(testing::nacl_pair(5.0), table));
  Coords same(2, 3);
  same << 0.1, 0.2, 0.3, 0.1, 0.2, 0.3;
  CHECK_FALSE(is_valid(Crystal(Lattice::cubic(5.0), {"Na", "Cl"}, same), table));
  CHECK_FALSE(is_valid(testing::nacl_pair(2.0), table));
  Coords one = Coords::Zero(2, 3);
  one(1, 0) = 0.5;
  const ElementTable ionic = ElementTable::from_oxidation_text("Na 1\nCl -1\n");
  CHECK(is_valid(Crystal(Lattice::cubic(5.0), {"Na", "Na"}, one), table));
  CHECK_FALSE(is_valid(Crystal(Lattice::cubic(5.0), {"Na", "Na"}, one), ionic));
  CHECK_FALSE(is_valid(Crystal(Lattice::cubic(5.0), {"Xx", "Cl"}, testing::nacl_pair().frac_coords()), table));
  CHECK_FALSE(is_valid(Crystal(Lattice::cubic(5.0), {}, Coords(0, 3)), table));
  for (const auto& r : testing::toy_corpus().records) CHECK(is_valid(r.crystal, table));
}

TEST_CASE("uniqueness and novelty") {
  const auto corpus = testing::toy_corpus().crystals();
  std::vector<Crystal> same(4, corpus[0]);
  CHECK(uniqueness(same) == doctest::Approx(25.0));
  CHECK(uniqueness(corpus) == doctest::Approx(100.0));
  CHECK(novelty(corpus, corpus) == doctest::Approx(0.0));
  const std::vector<Crystal> other{testing::nacl_pair(5.0), testing::ni2ti2()};
  CHECK(novelty(other, corpus) == doctest::Approx(100.0));
  std::vector<Crystal> mixed{corpus[1], testing::nacl_pair(5.0)};
  CHECK(novelty(mixed, corpus) == doctest::Approx(50.0));
  CHECK_THROWS_AS(uniqueness({}), ConfigError);
  CHECK_THROWS_AS(novelty({}, corpus), ConfigError);
}

TEST_CASE("fingerprint invariance under symmetry transforms") {
  Rng rng(1);
  for (const auto& r : testing::toy_corpus().records) {
    const auto base = fingerprint(r.crystal);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += fingerprint(transformed(r.crystal, rng)) == base;
    CHECK_MESSAGE(same == 100, r.identifier);
  }
  CHECK(fingerprint(testing::nacl_pair(5.0)) != fingerprint(testing::nacl_pair(5.5)));
}

TEST_CASE("jsd examples") {
  VectorX p(2), q(2);
  p << 1, 0;
  q << 0.5, 0.5;
  CHECK(jsd(p, p) == doctest::Approx(0.0));
  CHECK(jsd(p, q) == doctest::Approx(js_distance_oracle(p, q)).epsilon(1e-12));
  CHECK(jsd(p, q) * jsd(p, q) == doctest::Approx(0.5 * -std::log2(0.75) + 0.5 * (0.5 * std::log2(0.5 / 0.75) + 0.5)));
  VectorX a(4), b(4);
  a << 1, 2, 0, 0;
  b << 0, 0, 3, 1;
  CHECK(jsd(a, b) == doctest::Approx(1.0));
  CHECK_THROWS_AS(jsd(p, a), ShapeError);
  CHECK_THROWS_AS(jsd(VectorX::Zero(2), q), ConfigError);
}

TEST_CASE("jsd is a metric on random histograms") {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    VectorX p(5), q(5), r(5);
    for (int k = 0; k < 5; ++k) {
      p(k) = rng.uniform();
      q(k) = rng.uniform();
      r(k) = rng.uniform();
    }
    CHECK(jsd(p, q) == doctest::Approx(jsd(q, p)).epsilon(1e-14));
    CHECK(jsd(p, r) <= jsd(p, q) + jsd(q, r) + 1e-12);
    CHECK(jsd(p, q) == doctest::Approx(js_distance_oracle(p, q)).epsilon(1e-10));
    CHECK(jsd(p, q) >= 0.0);
    CHECK(jsd(p, q) <= 1.0);
  }
}

TEST_CASE("element histogram") {
  const std::vector<Crystal> a{testing::nacl_pair(), testing::ni2ti2()};
  const auto support = element_support(a, {});
  CHECK(support == std::vector<std::string>{"Cl", "Na", "Ni", "Ti"});
  const VectorX h = element_histogram(a, support);
  CHECK(h(0) == doctest::Approx(1.0 / 6));
  CHECK(h(2) == doctest::Approx(2.0 / 6));
}

TEST_CASE("mmd properties") {
  Rng rng(3);
  MatrixX a(40, 3), b(40, 3);
  for (int i = 0; i < 40; ++i) {
    for (int k = 0; k < 3; ++k) {
      a(i, k) = rng.normal();
      b(i, k) = 5.0 + rng.normal();
    }
  }
  CHECK(mmd(a, a, true) < 1e-9);
  CHECK(mmd(a, a) >= 0.0);
  CHECK(mmd(a, b) > 0.1);
  CHECK(std::abs(mmd(a, b) - mmd(b, a)) < 1e-12);
  CHECK(std::abs(mmd(a, b, true) - mmd(b, a, true)) < 1e-12);
  CHECK_THROWS(mmd(MatrixX(0, 3), b));
}

TEST_CASE("descriptor") {
  const Crystal c = testing::nacl_pair(5.0);
  const Vec3 d = descriptor(c, ElementTable::builtin());
  const double mass = ElementTable::builtin().at("Na").mass + ElementTable::builtin().at("Cl").mass;
  CHECK(d(0) == doctest::Approx(mass * 1.66053906660 / 125.0).epsilon(1e-4));
  CHECK(d(1) == doctest::Approx(125.0));
  CHECK(d(2) == 2.0);
}

struct EveryOther : EnergyOracle {
  int calls = 0;
  bool is_metastable(const Crystal&) override { return calls++ % 2 == 0; }
};

TEST_CASE("evaluate and report serialization") {
  const auto corpus = testing::toy_corpus().crystals();
  std::vector<Crystal> samples{corpus[0], corpus[0], testing::nacl_pair(2.0), testing::nacl_pair(5.0)};
  const auto report = evaluate(samples, corpus, ElementTable::builtin());
  CHECK(report.n_samples == 4);
  CHECK(report.n_valid == 3);
  CHECK(report.valid_pct == doctest::Approx(75.0));
  CHECK(report.unique_pct == doctest::Approx(75.0));
  CHECK(report.novel_pct == doctest::Approx(50.0));
  REQUIRE(report.jsd);
  CHECK(*report.jsd >= 0.0);
  CHECK_FALSE(report.metastable_pct);
  const auto j = report.to_json();
  CHECK(j.at("valid_pct").get<double>() == doctest::Approx(75.0));
  CHECK(j.at("metastable_pct").is_null());
  const std::string header = MetricsReport::csv_header();
  const std::string row = report.csv_row();
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));

  EveryOther oracle;
  const auto with = evaluate(samples, corpus, ElementTable::builtin(), &oracle);
  REQUIRE(with.metastable_pct);
  REQUIRE(with.msun_pct);
  CHECK(*with.msun_pct <= *with.metastable_pct);

  const auto empty = evaluate({}, corpus, ElementTable::builtin());
  CHECK(empty.n_samples == 0);
}
