#include "xtalgen/core/lattice.hpp"

#include <numbers>

namespace xtalgen {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

double angle_between(const Vec3& u, const Vec3& v) {
  return std::atan2(u.cross(v).norm(), u.dot(v));
}

}  // namespace

Lattice::Lattice(const Mat3& rows, double volume_epsilon) : rows_(rows) {
  if (!rows_.allFinite()) throw DegenerateCellError("lattice contains non-finite entries");
  const double volume = std::abs(rows_.determinant());
  if (!(volume >= volume_epsilon)) {
    throw DegenerateCellError("degenerate cell: volume " + std::to_string(volume) + " A^3");
  }
}

Lattice Lattice::from_parameters(const LatticeParameters& p) {
  const double ca = std::cos(p.alpha * kDegToRad);
  const double cb = std::cos(p.beta * kDegToRad);
  const double cg = std::cos(p.gamma * kDegToRad);
  const double sg = std::sin(p.gamma * kDegToRad);
  Mat3 rows = Mat3::Zero();
  rows(0, 0) = p.a;
  rows(1, 0) = p.b * cg;
  rows(1, 1) = p.b * sg;
  rows(2, 0) = p.c * cb;
  rows(2, 1) = p.c * (ca - cb * cg) / sg;
  const double z2 = p.c * p.c - rows(2, 0) * rows(2, 0) - rows(2, 1) * rows(2, 1);
  if (!(z2 > 0.0)) throw DegenerateCellError("lattice parameters do not describe a cell");
  rows(2, 2) = std::sqrt(z2);
  return Lattice(rows);
}

Lattice Lattice::canonical() const {
  Eigen::LLT<Mat3> llt(gram());
  if (llt.info() != Eigen::Success) throw DegenerateCellError("lattice metric is not positive definite");
  Mat3 lower = llt.matrixL();
  return Lattice(lower);
}

double cell_volume(const Lattice& lattice, double epsilon) {
  const double volume = lattice.volume();
  if (!(volume >= epsilon)) {
    throw DegenerateCellError("degenerate cell: volume " + std::to_string(volume) + " A^3");
  }
  return volume;
}

LatticeParameters lattice_invariants(const Lattice& lattice) {
  cell_volume(lattice);
  const Vec3 a = lattice.vector(0), b = lattice.vector(1), c = lattice.vector(2);
  LatticeParameters p;
  p.a = a.norm();
  p.b = b.norm();
  p.c = c.norm();
  p.alpha = angle_between(b, c) * kRadToDeg;
  p.beta = angle_between(a, c) * kRadToDeg;
  p.gamma = angle_between(a, b) * kRadToDeg;
  return p;
}

}  // namespace xtalgen
