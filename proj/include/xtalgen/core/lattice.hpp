#pragma once

#include <array>
#include <cmath>
#include <concepts>

#include "xtalgen/core/errors.hpp"
#include "xtalgen/core/types.hpp"

namespace xtalgen {

inline constexpr double kDefaultVolumeEpsilon = 1e-8;  // Å^3

// Wraps a fractional component onto [0, 1).
template <std::floating_point Scalar>
Scalar wrap_frac(Scalar x) {
  Scalar w = x - std::floor(x);
  // x slightly below an integer can round up to exactly 1.
  if (w >= Scalar(1)) w = Scalar(0);
  return w;
}

template <typename Derived>
auto wrap_frac(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](typename Derived::Scalar v) { return wrap_frac(v); });
}

// Shortest signed displacement on the unit circle, in (-0.5, 0.5].
template <std::floating_point Scalar>
Scalar min_image_delta(Scalar from, Scalar to) {
  const Scalar d = to - from;
  return d - std::ceil(d - Scalar(0.5));
}

template <typename DerivedA, typename DerivedB>
auto min_image_delta(const Eigen::MatrixBase<DerivedA>& from, const Eigen::MatrixBase<DerivedB>& to) {
  return (to - from).unaryExpr(
      [](typename DerivedA::Scalar d) { return d - std::ceil(d - typename DerivedA::Scalar(0.5)); });
}

// (a, b, c) in Å and (alpha, beta, gamma) in degrees.
struct LatticeParameters {
  double a = 0, b = 0, c = 0;
  double alpha = 0, beta = 0, gamma = 0;

  std::array<double, 6> as_array() const { return {a, b, c, alpha, beta, gamma}; }
};

// Three lattice vectors stored as the rows of a 3x3 matrix (Å).
class Lattice {
 public:
  Lattice() : rows_(Mat3::Identity()) {}
  explicit Lattice(const Mat3& rows, double volume_epsilon = kDefaultVolumeEpsilon);

  static Lattice from_parameters(const LatticeParameters& p);
  static Lattice cubic(double a) { return Lattice(Mat3::Identity() * a); }

  const Mat3& rows() const { return rows_; }
  Vec3 vector(int i) const { return rows_.row(i).transpose(); }

  double volume() const { return std::abs(rows_.determinant()); }
  Mat3 gram() const { return rows_ * rows_.transpose(); }

  // Rotation-free lower-triangular form: a along x, b in the xy-plane with
  // positive y, c with positive z. Same metric (Gram matrix) as this lattice.
  Lattice canonical() const;

  // Rows rotated by R (each lattice vector l -> R l).
  Lattice rotated(const Mat3& rotation) const { return Lattice(rows_ * rotation.transpose()); }

  template <typename Derived>
  Coords to_cartesian(const Eigen::MatrixBase<Derived>& frac) const {
    return frac * rows_;
  }
  template <typename Derived>
  Coords to_fractional(const Eigen::MatrixBase<Derived>& cart) const {
    return cart * rows_.inverse();
  }

  bool operator==(const Lattice& other) const { return rows_ == other.rows_; }

 private:
  Mat3 rows_;
};

// |det(rows)|; throws DegenerateCellError below epsilon.
double cell_volume(const Lattice& lattice, double epsilon = kDefaultVolumeEpsilon);

// Row norms and inter-row angles. Invariant to rotation and reflection of the rows.
LatticeParameters lattice_invariants(const Lattice& lattice);

}  // namespace xtalgen
