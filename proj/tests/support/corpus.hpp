#pragma once

#include <string>
#include <vector>

#include "xtalgen/core/crystal.hpp"
#include "xtalgen/core/random.hpp"
#include "xtalgen/io/dataset.hpp"

namespace xtalgen::testing {

inline std::string data_path(const std::string& name) { return std::string(XTALGEN_TEST_DATA_DIR) + "/" + name; }

inline io::Dataset toy_corpus() { return io::load_dataset(data_path("toy_corpus.jsonl")); }

inline Crystal nacl_pair(double a = 5.0) {
  Coords x(2, 3);
  x << 0, 0, 0, 0.5, 0.5, 0.5;
  return Crystal(Lattice::cubic(a), {"Na", "Cl"}, x);
}

inline Crystal ni2ti2(double a = 4.2, double c = 3.1) {
  Mat3 rows;
  rows << a, 0, 0, 0, a, 0, 0, 0, c;
  Coords x(4, 3);
  x << 0, 0, 0, 0.5, 0.5, 0.5, 0.5, 0.5, 0, 0, 0, 0.5;
  return Crystal(Lattice(rows), {"Ni", "Ni", "Ti", "Ti"}, x);
}

// Uniformly random rotation from a normalized Gaussian quaternion.
inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

inline Coords random_coords(Eigen::Index n, Rng& rng) {
  Coords x(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) x(i, k) = rng.uniform();
  }
  return x;
}

// A skewed but well-conditioned lattice.
inline Lattice random_lattice(Rng& rng) {
  while (true) {
    Mat3 rows;
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) rows(i, k) = (i == k ? 4.0 : 0.0) + rng.uniform(-1.0, 1.0);
    }
    if (std::abs(rows.determinant()) > 20.0) return Lattice(rows);
  }
}

}  // namespace xtalgen::testing
