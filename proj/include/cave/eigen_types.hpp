#pragma once

#include <Eigen/Dense>

namespace cave {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using VectorXd = Vector<double>;
using RowVectorXd = RowVector<double>;
using MatrixXd = Matrix<double>;
using ArrayXd = Array<double>;

}  // namespace cave
