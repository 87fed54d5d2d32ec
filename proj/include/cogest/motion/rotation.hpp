#ifndef COGEST_MOTION_ROTATION_HPP_
#define COGEST_MOTION_ROTATION_HPP_

#include <string>
#include <string_view>

#include "cogest/core/types.hpp"

namespace cogest::motion {

using Rot6d = Eigen::Matrix<double, 6, 1>;

/// Intrinsic Euler order as written in BVH channel lists, e.g. "ZXY" means
/// R = Rz(a0) * Rx(a1) * Ry(a2). Must be a permutation of XYZ.
class EulerOrder {
 public:
  EulerOrder() = default;
  explicit EulerOrder(std::string_view axes);
  int axis(int i) const { return axes_[i]; }
  std::string str() const;
  bool operator==(const EulerOrder&) const = default;

 private:
  int axes_[3] = {2, 0, 1};
};

Mat3 axis_rotation(int axis, double radians);

/// Angles in degrees.
Mat3 euler_to_matrix(const Vec3& degrees, const EulerOrder& order);
Vec3 matrix_to_euler(const Mat3& r, const EulerOrder& order);

/// rot6d convention used everywhere: the first two rows of R, row-major.
Rot6d matrix_to_rot6d(const Mat3& r);
Rot6d euler_to_rot6d(const Vec3& degrees, const EulerOrder& order);

/// Gram-Schmidt completion of a rot6d vector to a proper rotation.
/// Throws NumericalError when either row is near zero or the rows are near parallel.
Mat3 rot6d_to_matrix(const Rot6d& r);

}  // namespace cogest::motion

#endif  // COGEST_MOTION_ROTATION_HPP_
