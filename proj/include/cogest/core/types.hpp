#ifndef COGEST_CORE_TYPES_HPP_
#define COGEST_CORE_TYPES_HPP_

#include <Eigen/Dense>

namespace cogest {

// Row-major throughout: one motion frame (or one token) per row.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXf = Matrix<float>;
using MatrixXd = Matrix<double>;
using RowVectorXd = RowVector<double>;
using VectorXd = Vector<double>;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

}  // namespace cogest

#endif  // COGEST_CORE_TYPES_HPP_
