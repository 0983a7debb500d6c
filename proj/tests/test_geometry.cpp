#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "depthreg/geometry.hpp"

using namespace depthreg;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 random_angles(std::mt19937_64& rng, double range = kPi) {
  std::uniform_real_distribution<double> u(-range, range);
  return {u(rng), u(rng), u(rng)};
}

double rel_fro(const Mat3& a, const Mat3& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

TEST(Rotation, ZeroIsIdentity) { EXPECT_TRUE(rotation(Vec3::Zero()).isIdentity(0.0)); }

TEST(Rotation, QuarterYawMapsXToY) {
  const Vec3 v = rotation(Vec3(0, 0, kPi / 2)) * Vec3::UnitX();
  EXPECT_NEAR((v - Vec3::UnitY()).norm(), 0.0, 1e-15);
}

TEST(Rotation, CompositionOrderIsYawPitchRoll) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vec3 th = random_angles(rng);
    const Mat3 expected = (Eigen::AngleAxisd(th.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(th.y(), Vec3::UnitY()) *
                           Eigen::AngleAxisd(th.x(), Vec3::UnitX()))
                              .toRotationMatrix();
    EXPECT_LT((rotation(th) - expected).norm(), 1e-14);
  }
}

TEST(Rotation, OrthonormalOverRandomAngles) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 r = rotation(random_angles(rng));
    EXPECT_LT((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(RotationDerivatives, YawAtIdentityIsGenerator) {
  Mat3 k;
  k << 0, -1, 0, 1, 0, 0, 0, 0, 0;
  EXPECT_LT((rotation_derivatives(Vec3::Zero()).dR_dz - k).norm(), 1e-15);
}

TEST(RotationDerivatives, MatchCentralDifferences) {
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 th = random_angles(rng);
    const auto d = rotation_derivatives(th);
    for (int k = 0; k < 3; ++k) {
      Vec3 up = th, down = th;
      up[k] += h;
      down[k] -= h;
      const Mat3 fd = (rotation(up) - rotation(down)) / (2 * h);
      EXPECT_LT(rel_fro(d[k], fd), 1e-6) << "axis " << k;
    }
  }
}

TEST(RotationDerivatives, FiniteAtGimbalLock) {
  const auto d = rotation_derivatives(Vec3(0.3, kPi / 2, -0.2));
  for (int k = 0; k < 3; ++k) EXPECT_TRUE(d[k].allFinite());
  Pose p;
  p.theta = Vec3(0, kPi / 2, 0);
  EXPECT_TRUE(p.near_gimbal_lock());
  p.theta.y() = kPi / 2 - 0.06;
  EXPECT_FALSE(p.near_gimbal_lock());
}

TEST(TransformPoint, Examples) {
  EXPECT_EQ(transform_point(Pose::identity(), Vec3(1, 2, 3)), Vec3(1, 2, 3));
  Pose shift;
  shift.t = Vec3(1, 0, 0);
  EXPECT_EQ(transform_point(shift, Vec3::Zero()), Vec3(1, 0, 0));
}

TEST(TransformPoint, MatchesExplicitProducts) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 200; ++i) {
    Pose pose{{u(rng), u(rng), u(rng)}, random_angles(rng)};
    const Vec3 p(u(rng), u(rng), u(rng));
    const double cx = std::cos(pose.theta.x()), sx = std::sin(pose.theta.x());
    const double cy = std::cos(pose.theta.y()), sy = std::sin(pose.theta.y());
    const double cz = std::cos(pose.theta.z()), sz = std::sin(pose.theta.z());
    Mat3 rx, ry, rz;
    rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
    ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
    rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
    const Vec3 expected = rz * (ry * (rx * p)) + pose.t;
    EXPECT_LT((transform_point(pose, p) - expected).norm(), 1e-13);
  }
}

TEST(TransformPoint, JacobianMatchesCentralDifferences) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2, 2);
  const double h = 1e-6;
  for (int i = 0; i < 200; ++i) {
    const Pose pose{{u(rng), u(rng), u(rng)}, random_angles(rng, 1.4)};
    const Vec3 p(u(rng), u(rng), u(rng));
    const auto j = transform_jacobian(pose, p);
    for (int k = 0; k < 6; ++k) {
      Pose up = pose, down = pose;
      if (k < 3) {
        up.t[k] += h;
        down.t[k] -= h;
      } else {
        up.theta[k - 3] += h;
        down.theta[k - 3] -= h;
      }
      const Vec3 fd = (transform_point(up, p) - transform_point(down, p)) / (2 * h);
      EXPECT_LT((j.col(k) - fd).norm() / std::max(1.0, fd.norm()), 1e-6);
    }
  }
}

TEST(Angles, NormalizeIntoHalfOpenRange) {
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
  EXPECT_NEAR(normalize_angle(3 * kPi + 0.1), -kPi + 0.1, 1e-12);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    const double n = normalize_angle(a);
    EXPECT_GT(n, -kPi);
    EXPECT_LE(n, kPi);
    EXPECT_NEAR(std::remainder(a - n, 2 * kPi), 0.0, 1e-9);
  }
}

TEST(Pose, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 100; ++i) {
    const Pose a{{u(rng), u(rng), u(rng)}, random_angles(rng, 1.3)};
    const Pose id = compose(a, inverse(a));
    EXPECT_LT(id.t.norm(), 1e-12);
    EXPECT_LT((id.rotation() - Mat3::Identity()).norm(), 1e-12);
  }
}

TEST(Pose, EulerFromRotationRoundTrip) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 1000; ++i) {
    Vec3 th = random_angles(rng);
    th.y() = std::clamp(th.y(), -kPi / 2 + 0.1, kPi / 2 - 0.1);
    EXPECT_LT((euler_from_rotation(rotation(th)) - th).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Pose, GeodesicAngle) {
  EXPECT_NEAR(rotation_angle_between(Mat3::Identity(), rotation(Vec3(0, 0, 0.3))), 0.3, 1e-12);
  EXPECT_NEAR(rotation_angle_between(rotation(Vec3(0.2, 0, 0)), rotation(Vec3(0.2, 0, 0))), 0.0, 1e-12);
}
