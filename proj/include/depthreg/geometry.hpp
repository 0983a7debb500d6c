#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "depthreg/numeric.hpp"

namespace depthreg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// |pitch| above this is reported as close to gimbal lock.
inline constexpr double kGimbalWarningPitch = std::numbers::pi / 2.0 - 0.05;

/// Rotation from roll-pitch-yaw Euler angles, R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Mat3 rotation(const Vec3& theta) {
  const double cx = std::cos(theta.x()), sx = std::sin(theta.x());
  const double cy = std::cos(theta.y()), sy = std::sin(theta.y());
  const double cz = std::cos(theta.z()), sz = std::sin(theta.z());
  Mat3 r;
  r << cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx,
       sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx,
       -sy,     cy * sx,                cy * cx;
  return r;
}

/// Partial derivatives of rotation() with respect to roll, pitch and yaw.
struct RotationDerivatives {
  Mat3 dR_dx;
  Mat3 dR_dy;
  Mat3 dR_dz;

  const Mat3& operator[](int axis) const { return axis == 0 ? dR_dx : (axis == 1 ? dR_dy : dR_dz); }
};

inline RotationDerivatives rotation_derivatives(const Vec3& theta) {
  const double cx = std::cos(theta.x()), sx = std::sin(theta.x());
  const double cy = std::cos(theta.y()), sy = std::sin(theta.y());
  const double cz = std::cos(theta.z()), sz = std::sin(theta.z());
  RotationDerivatives d;
  d.dR_dx << 0.0, cz * sy * cx + sz * sx, -cz * sy * sx + sz * cx,
             0.0, sz * sy * cx - cz * sx, -sz * sy * sx - cz * cx,
             0.0, cy * cx,                -cy * sx;
  d.dR_dy << -cz * sy, cz * cy * sx, cz * cy * cx,
             -sz * sy, sz * cy * sx, sz * cy * cx,
             -cy,      -sy * sx,     -sy * cx;
  d.dR_dz << -sz * cy, -sz * sy * sx - cz * cx, -sz * sy * cx + cz * sx,
             cz * cy,  cz * sy * sx - sz * cx,  cz * sy * cx + sz * sx,
             0.0,      0.0,                     0.0;
  return d;
}

/// Inverse of rotation(): recovers (roll, pitch, yaw) with pitch in [-pi/2, pi/2].
inline Vec3 euler_from_rotation(const Mat3& r) {
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {roll, pitch, yaw};
}

/// Rigid transform of one frame: translation in metres, roll-pitch-yaw in radians.
struct Pose {
  Vec3 t = Vec3::Zero();
  Vec3 theta = Vec3::Zero();

  static Pose identity() { return {}; }

  Mat3 rotation() const { return depthreg::rotation(theta); }

  void normalize() {
    for (int k = 0; k < 3; ++k) theta[k] = normalize_angle(theta[k]);
  }

  bool near_gimbal_lock() const { return std::abs(theta.y()) > kGimbalWarningPitch; }

  friend bool operator==(const Pose& a, const Pose& b) { return a.t == b.t && a.theta == b.theta; }
};

/// Local-to-global projection R p + t.
inline Vec3 transform_point(const Pose& pose, const Vec3& p) { return pose.rotation() * p + pose.t; }

inline Pose pose_from_rotation(const Mat3& r, const Vec3& t) { return {t, euler_from_rotation(r)}; }

inline Pose compose(const Pose& a, const Pose& b) {
  const Mat3 ra = a.rotation();
  return pose_from_rotation(ra * b.rotation(), ra * b.t + a.t);
}

inline Pose inverse(const Pose& a) {
  const Mat3 rt = a.rotation().transpose();
  return pose_from_rotation(rt, -(rt * a.t));
}

/// d(R p + t)/d[t, theta] as a 3x6 block: [I | dR/dtheta_k * p].
inline Eigen::Matrix<double, 3, 6> transform_jacobian(const Pose& pose, const Vec3& p) {
  const RotationDerivatives d = rotation_derivatives(pose.theta);
  Eigen::Matrix<double, 3, 6> j;
  j.leftCols<3>().setIdentity();
  for (int k = 0; k < 3; ++k) j.col(3 + k) = d[k] * p;
  return j;
}

inline Eigen::Quaterniond quaternion_from_euler(const Vec3& theta) {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(theta.z(), Vec3::UnitZ()) *
                               Eigen::AngleAxisd(theta.y(), Vec3::UnitY()) *
                               Eigen::AngleAxisd(theta.x(), Vec3::UnitX());
  return q.w() < 0.0 ? Eigen::Quaterniond(-q.coeffs()) : q;
}

inline Vec3 euler_from_quaternion(const Eigen::Quaterniond& q) {
  return euler_from_rotation(q.normalized().toRotationMatrix());
}

/// Geodesic angle between two rotations, in [0, pi].
inline double rotation_angle_between(const Mat3& a, const Mat3& b) {
  // atan2 of sine and cosine parts; acos alone loses precision near zero.
  const Mat3 r = a.transpose() * b;
  const double s = 0.5 * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)).norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

}  // namespace depthreg
