#include <cmath>

#include "doctest.h"
#include "support/corpus.hpp"
#include "xtalgen/core/crystal.hpp"
#include "xtalgen/core/elements.hpp"
#include "xtalgen/core/errors.hpp"
#include "xtalgen/core/lattice.hpp"

using namespace xtalgen;
using xtalgen::testing::random_coords;
using xtalgen::testing::random_lattice;
using xtalgen::testing::random_rotation;

TEST_CASE("frac_to_cart") {
  Coords x(1, 3);
  x << 0.3, 0.7, 0.1;
  SUBCASE("identity lattice") {
    const Coords c = frac_to_cart(Crystal(Lattice(Mat3::Identity()), {"Na"}, x));
    CHECK((c - x).norm() < 1e-15);
  }
  SUBCASE("cubic scaling") {
    Coords h(1, 3);
    h << 0.5, 0.5, 0.5;
    const Coords c = frac_to_cart(Crystal(Lattice::cubic(2.0), {"Na"}, h));
    CHECK((c - Coords::Ones(1, 3)).norm() < 1e-15);
  }
  SUBCASE("general lattice is a row combination") {
    Rng rng(11);
    const Lattice lat = random_lattice(rng);
    const Coords f = random_coords(5, rng);
    const Coords c = frac_to_cart(Crystal(lat, std::vector<std::string>(5, "O"), f));
    for (int i = 0; i < 5; ++i) {
      Eigen::RowVector3d expect = Eigen::RowVector3d::Zero();
      for (int k = 0; k < 3; ++k) expect += f(i, k) * lat.rows().row(k);
      CHECK((c.row(i) - expect).norm() < 1e-12);
    }
  }
}

TEST_CASE("cartesian round trip") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Lattice lat = random_lattice(rng);
    const Coords f = random_coords(4, rng);
    CHECK((lat.to_fractional(lat.to_cartesian(f)) - f).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("cell_volume") {
  CHECK(cell_volume(Lattice(Mat3::Identity())) == doctest::Approx(1.0));
  CHECK(cell_volume(Lattice::cubic(3.0)) == doctest::Approx(27.0));
  Mat3 rows;
  rows << 1, 0, 0, 1, 0, 0, 0, 0, 1;
  CHECK_THROWS_AS(Lattice{rows}, DegenerateCellError);
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(Lattice{bad}, DegenerateCellError);
}

TEST_CASE("wrap_frac") {
  CHECK(wrap_frac(1.2) == doctest::Approx(0.2));
  CHECK(wrap_frac(-0.1) == doctest::Approx(0.9));
  CHECK(wrap_frac(0.5) == 0.5);
  CHECK(wrap_frac(-1e-18) < 1.0);
  CHECK(wrap_frac(-1e-18) >= 0.0);
  CHECK(wrap_frac(3.0) == 0.0);
}

TEST_CASE("min_image_delta") {
  CHECK(min_image_delta(0.9, 0.1) == doctest::Approx(0.2));
  CHECK(min_image_delta(0.1, 0.9) == doctest::Approx(-0.2));
  CHECK(min_image_delta(0.25, 0.75) == 0.5);
  CHECK(min_image_delta(0.75, 0.25) == 0.5);

  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.uniform();
    const double y = rng.uniform();
    const double d = min_image_delta(x, y);
    CHECK(std::abs(d) <= 0.5);
    CHECK(d > -0.5);
    // Torus distance between wrap(x + d) and y.
    CHECK(std::abs(min_image_delta(wrap_frac(x + d), y)) < 1e-12);
  }
}

TEST_CASE("lattice_invariants") {
  const auto id = lattice_invariants(Lattice(Mat3::Identity()));
  CHECK(id.a == doctest::Approx(1.0));
  CHECK(id.alpha == doctest::Approx(90.0));
  CHECK(id.gamma == doctest::Approx(90.0));
  Mat3 d = Mat3::Zero();
  d.diagonal() << 2, 3, 4;
  const auto p = lattice_invariants(Lattice(d));
  CHECK(p.a == doctest::Approx(2.0));
  CHECK(p.b == doctest::Approx(3.0));
  CHECK(p.c == doctest::Approx(4.0));
  CHECK(p.beta == doctest::Approx(90.0));

  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Lattice lat = random_lattice(rng);
    const auto a = lattice_invariants(lat).as_array();
    const auto b = lattice_invariants(lat.rotated(random_rotation(rng))).as_array();
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(a[k] - b[k]) < 1e-8);
  }
}

TEST_CASE("parameters round trip and canonical form") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Lattice lat = random_lattice(rng);
    const Lattice back = Lattice::from_parameters(lattice_invariants(lat));
    CHECK((back.gram() - lat.gram()).cwiseAbs().maxCoeff() < 1e-9);
    const Lattice canon = lat.canonical();
    CHECK((canon.gram() - lat.gram()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(canon.rows()(0, 1)) < 1e-12);
    CHECK(std::abs(canon.rows()(0, 2)) < 1e-12);
    CHECK(std::abs(canon.rows()(1, 2)) < 1e-12);
    CHECK(canon.rows()(2, 2) > 0.0);
  }
}

TEST_CASE("crystal construction") {
  Coords x(2, 3);
  x << 1.25, -0.5, 0.0, 0.5, 0.5, 2.0;
  const Crystal c(Lattice::cubic(4.0), {"Na", "Cl"}, x);
  CHECK(c.frac_coords()(0, 0) == doctest::Approx(0.25));
  CHECK(c.frac_coords()(0, 1) == doctest::Approx(0.5));
  CHECK(c.frac_coords()(1, 2) == 0.0);
  CHECK((c.frac_coords().array() >= 0.0).all());
  CHECK((c.frac_coords().array() < 1.0).all());
  CHECK_THROWS_AS(Crystal(Lattice::cubic(4.0), {"Na"}, x), ShapeError);
  CHECK(composition_string(xtalgen::testing::ni2ti2().composition()) == "Ni2Ti2");
}

TEST_CASE("periodic_distance uses the nearest image") {
  const Lattice lat = Lattice::cubic(5.0);
  CHECK(periodic_distance(lat, Vec3(0.05, 0, 0), Vec3(0.95, 0, 0)) == doctest::Approx(0.5));
  CHECK(periodic_distance(lat, Vec3(0, 0, 0), Vec3(0.5, 0.5, 0.5)) == doctest::Approx(std::sqrt(3.0) * 2.5));
  // Strongly sheared cell: the nearest image is not the fractional minimum image.
  Mat3 rows;
  rows << 5, 0, 0, 4.5, 1, 0, 0, 0, 5;
  const Lattice sheared(rows);
  const Vec3 a(0.0, 0.0, 0.0), b(0.1, 0.9, 0.0);
  double brute = 1e9;
  for (int i = -3; i <= 3; ++i) {
    for (int j = -3; j <= 3; ++j) {
      const Vec3 f = b - a + Vec3(i, j, 0);
      brute = std::min(brute, (f.transpose() * rows).norm());
    }
  }
  CHECK(periodic_distance(sheared, a, b) == doctest::Approx(brute));
}

TEST_CASE("element table") {
  const auto& t = ElementTable::builtin();
  CHECK(t.at("Na").atomic_number == 11);
  CHECK(t.at("Cl").oxidation_states.front() == -1);
  CHECK_THROWS_AS(t.at("Xx"), UnknownElementError);
  for (const auto& s : t.symbols()) CHECK_FALSE(t.at(s).oxidation_states.empty());

  const ElementTable custom = ElementTable::from_oxidation_text("# comment\nNa 1\nCl -1 1  # trailing\n");
  CHECK(custom.size() == 2);
  CHECK(custom.at("Na").mass == doctest::Approx(22.990));
  CHECK(custom.oxidation_states("Cl") == std::vector<int>{-1, 1});
  const ElementTable again = ElementTable::from_oxidation_text(custom.to_oxidation_text());
  CHECK(again.oxidation_states("Cl") == custom.oxidation_states("Cl"));
  CHECK_THROWS_AS(ElementTable::from_oxidation_text("Na one\n"), ParseError);
  CHECK_THROWS_AS(ElementTable::from_oxidation_text("Na\n"), ParseError);
}

TEST_CASE("random streams") {
  Rng a(42), b(42), c(43);
  const auto x = a.next_u64();
  CHECK(x == b.next_u64());
  CHECK(x != c.next_u64());
  CHECK(derive_seed(7, 0) != derive_seed(7, 1));
  CHECK(derive_seed(7, 1) == derive_seed(7, 1));

  Rng r(1);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);

  std::vector<double> w{1.0, 0.0, 3.0};
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 40000; ++i) ++counts[r.categorical(w)];
  CHECK(counts[1] == 0);
  CHECK(std::abs(counts[2] / 40000.0 - 0.75) < 0.01);
}
