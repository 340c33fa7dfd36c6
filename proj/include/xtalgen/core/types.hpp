#pragma once

#include <Eigen/Dense>

namespace xtalgen {

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
// N x 3 block of per-atom coordinates, one atom per row.
template <typename Scalar>
using CoordsT = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

using Mat3 = Matrix3<double>;
using Vec3 = Vector3<double>;
using Coords = CoordsT<double>;
using MatrixX = Eigen::MatrixXd;
using VectorX = Eigen::VectorXd;

}  // namespace xtalgen
