#include "cogest/motion/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cogest/core/error.hpp"

namespace cogest::motion {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Cyclic successor axes (u, v) of `a`: X->(Y,Z), Y->(Z,X), Z->(X,Y).
int next_axis(int a) { return (a + 1) % 3; }

}  // namespace

EulerOrder::EulerOrder(std::string_view axes) {
  if (axes.size() != 3) throw UsageError("euler order must have three axes: " + std::string(axes));
  bool seen[3] = {false, false, false};
  for (int i = 0; i < 3; ++i) {
    const char c = axes[static_cast<std::size_t>(i)];
    int a = -1;
    if (c == 'X' || c == 'x') a = 0;
    if (c == 'Y' || c == 'y') a = 1;
    if (c == 'Z' || c == 'z') a = 2;
    if (a < 0 || seen[a]) throw UsageError("invalid euler order " + std::string(axes));
    seen[a] = true;
    axes_[i] = a;
  }
}

std::string EulerOrder::str() const {
  std::string s;
  for (int a : axes_) s += static_cast<char>('X' + a);
  return s;
}

Mat3 axis_rotation(int axis, double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  Mat3 r = Mat3::Identity();
  const int u = next_axis(axis), v = next_axis(u);
  r(u, u) = c;
  r(u, v) = -s;
  r(v, u) = s;
  r(v, v) = c;
  return r;
}

Mat3 euler_to_matrix(const Vec3& degrees, const EulerOrder& order) {
  return axis_rotation(order.axis(0), degrees(0) * kDeg) * axis_rotation(order.axis(1), degrees(1) * kDeg) *
         axis_rotation(order.axis(2), degrees(2) * kDeg);
}

Vec3 matrix_to_euler(const Mat3& r, const EulerOrder& order) {
  const int i = order.axis(0), j = order.axis(1), k = order.axis(2);
  // +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise.
  const double s = (next_axis(i) == j) ? 1.0 : -1.0;
  const double sb = std::clamp(s * r(i, k), -1.0, 1.0);
  double a = 0, b = std::asin(sb), c = 0;
  if (std::abs(sb) < 1.0 - 1e-12) {
    a = std::atan2(-s * r(j, k), r(k, k));
    c = std::atan2(-s * r(i, j), r(i, i));
  } else {
    // Gimbal lock: fix the last angle at zero and read the first from
    // Ra(a) = R * Rb(b)^T.
    const Mat3 ra = r * axis_rotation(j, b).transpose();
    const int u = next_axis(i), v = next_axis(u);
    a = std::atan2(ra(v, u), ra(u, u));
  }
  return Vec3(a, b, c) / kDeg;
}

Rot6d matrix_to_rot6d(const Mat3& r) {
  Rot6d out;
  out << r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2);
  return out;
}

Rot6d euler_to_rot6d(const Vec3& degrees, const EulerOrder& order) {
  return matrix_to_rot6d(euler_to_matrix(degrees, order));
}

Mat3 rot6d_to_matrix(const Rot6d& r) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  const double n1 = a1.norm(), n2 = a2.norm();
  if (n1 < 1e-8 || n2 < 1e-8) throw NumericalError("rot6d row norm below 1e-8");
  const Vec3 b1 = a1 / n1;
  if (std::abs(b1.dot(a2 / n2)) > 1.0 - 1e-8) throw NumericalError("rot6d rows are parallel");
  Vec3 b2 = a2 - b1.dot(a2) * b1;
  b2.normalize();
  Mat3 m;
  m.row(0) = b1.transpose();
  m.row(1) = b2.transpose();
  m.row(2) = b1.cross(b2).transpose();
  return m;
}

}  // namespace cogest::motion
