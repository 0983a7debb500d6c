#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "depthreg/depth_map.hpp"
#include "depthreg/error.hpp"
#include "depthreg/geometry.hpp"
#include "depthreg/point_cloud.hpp"

// Synthetic scenes plus the test oracles. The oracles here deliberately avoid
// the evaluation code in problem.hpp and the interpolation in depth_map.hpp.

namespace depthreg::synth {

struct GaussianBump {
  Vec2 centre = Vec2::Zero();
  double sigma = 0.5;
  double amplitude = 0.2;
};

/// Analytic 2.5D surface z = f(x, y).
struct Surface {
  enum class Kind { Plane, GaussianBumps, StepTerrace };

  Kind kind = Kind::Plane;
  // z = a x + b y + c for planes; c is also the base level of bumps and terraces.
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  std::vector<GaussianBump> bumps;
  // Terrace k covers x in [k * terrace_width, (k + 1) * terrace_width).
  std::vector<double> terrace_heights;
  double terrace_width = 1.0;

  double height(double x, double y) const {
    switch (kind) {
      case Kind::Plane:
        return a * x + b * y + c;
      case Kind::GaussianBumps: {
        double z = c;
        for (const auto& bump : bumps) {
          const double d2 = (Vec2(x, y) - bump.centre).squaredNorm();
          z += bump.amplitude * std::exp(-0.5 * d2 / (bump.sigma * bump.sigma));
        }
        return z;
      }
      case Kind::StepTerrace: {
        if (terrace_heights.empty()) return c;
        const long k = std::clamp<long>(static_cast<long>(std::floor(x / terrace_width)), 0,
                                        static_cast<long>(terrace_heights.size()) - 1);
        return c + terrace_heights[static_cast<std::size_t>(k)];
      }
    }
    return c;
  }
};

inline const char* to_string(Surface::Kind k) {
  switch (k) {
    case Surface::Kind::Plane: return "plane";
    case Surface::Kind::GaussianBumps: return "bumps";
    case Surface::Kind::StepTerrace: return "terrace";
  }
  return "plane";
}

struct SceneSpec {
  Surface surface;
  Vec2 extent{3.0, 3.0};  // scene covers [0, ex] x [0, ey]
  int frames = 10;
  int grid_cols = 0;  // frames per row of the capture pattern; 0 picks one from the extent aspect
  Vec2 footprint{1.2, 1.2};
  int points_per_frame = 2000;
  double noise_sigma = 0.0;
  double perturb_translation = 0.0;  // per-component bound, metres
  double perturb_rotation = 0.0;     // per-angle bound, radians
  double camera_height = 1.5;
  double attitude_range = 0.05;  // ground-truth roll/pitch drawn from +-range
  double yaw_range = 0.2;
  std::uint64_t seed = 1;

  int rows_of_frames() const { return (frames + columns() - 1) / columns(); }
  int columns() const {
    if (grid_cols > 0) return std::min(grid_cols, frames);
    const int c = static_cast<int>(std::ceil(std::sqrt(frames * extent.x() / extent.y())));
    return std::clamp(c, 1, frames);
  }

  /// Footprint centre of frame i along a serpentine path.
  Vec2 frame_centre(int i) const {
    const int cols = columns();
    const int rows = rows_of_frames();
    const int row = i / cols;
    int col = i % cols;
    if (row % 2 == 1) col = cols - 1 - col;
    const double cx = cols > 1 ? footprint.x() / 2 + col * (extent.x() - footprint.x()) / (cols - 1) : extent.x() / 2;
    const double cy = rows > 1 ? footprint.y() / 2 + row * (extent.y() - footprint.y()) / (rows - 1) : extent.y() / 2;
    return {cx, cy};
  }

  /// Overlap area between consecutive footprints as a fraction of one footprint.
  double min_consecutive_overlap() const {
    double worst = 1.0;
    for (int i = 1; i < frames; ++i) {
      const Vec2 d = (frame_centre(i) - frame_centre(i - 1)).cwiseAbs();
      const double ox = std::max(0.0, footprint.x() - d.x());
      const double oy = std::max(0.0, footprint.y() - d.y());
      worst = std::min(worst, ox * oy / (footprint.x() * footprint.y()));
    }
    return worst;
  }

  void validate() const {
    const auto finite = [](double v) { return std::isfinite(v); };
    if (frames < 1) throw InvalidArgument("scene: frames must be >= 1");
    if (points_per_frame < 1) throw InvalidArgument("scene: points_per_frame must be >= 1");
    if (!(extent.allFinite() && footprint.allFinite()) || extent.minCoeff() <= 0.0 || footprint.minCoeff() <= 0.0) {
      throw InvalidArgument("scene: extent and footprint must be positive");
    }
    if (footprint.x() > extent.x() || footprint.y() > extent.y()) {
      throw InvalidArgument("scene: footprint larger than extent");
    }
    if (!(noise_sigma >= 0.0) || !finite(noise_sigma)) throw InvalidArgument("scene: noise sigma must be >= 0");
    if (!(perturb_translation >= 0.0) || !(perturb_rotation >= 0.0) || !finite(perturb_translation) ||
        !finite(perturb_rotation)) {
      throw InvalidArgument("scene: perturbation bounds must be finite and >= 0");
    }
    if (!finite(camera_height) || !finite(attitude_range) || !finite(yaw_range)) {
      throw InvalidArgument("scene: pose ranges must be finite");
    }
    if (!finite(surface.a) || !finite(surface.b) || !finite(surface.c)) throw InvalidArgument("scene: bad surface");
    for (const auto& b : surface.bumps) {
      if (!b.centre.allFinite() || !(b.sigma > 0.0) || !finite(b.amplitude)) {
        throw InvalidArgument("scene: bump needs finite centre, amplitude and sigma > 0");
      }
    }
    if (surface.kind == Surface::Kind::StepTerrace && !(surface.terrace_width > 0.0)) {
      throw InvalidArgument("scene: terrace width must be positive");
    }
    if (min_consecutive_overlap() < 0.2) {
      throw InvalidArgument("scene: consecutive footprints overlap less than 20%");
    }
  }
};

struct Scene {
  std::vector<PointCloud> clouds;             // local coordinates
  std::vector<Pose> ground_truth;
  std::vector<Pose> initial;                  // ground truth plus bounded perturbation
  std::vector<std::vector<Vec3>> global_points;  // noisy samples in the world frame
  Surface surface;
};

inline std::string frame_name(int i) {
  std::ostringstream s;
  s << "frame_" << std::setw(3) << std::setfill('0') << i;
  return s.str();
}

/// Deterministic per seed.
inline Scene generate(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::normal_distribution<double> noise(0.0, 1.0);

  Scene scene;
  scene.surface = spec.surface;
  for (int i = 0; i < spec.frames; ++i) {
    const Vec2 centre = spec.frame_centre(i);
    Pose gt;
    gt.t = Vec3(centre.x(), centre.y(), spec.camera_height);
    gt.theta = Vec3(uniform(-spec.attitude_range, spec.attitude_range),
                    uniform(-spec.attitude_range, spec.attitude_range), uniform(-spec.yaw_range, spec.yaw_range));
    gt.normalize();

    PointCloud cloud;
    cloud.frame_id = frame_name(i);
    cloud.points.reserve(static_cast<std::size_t>(spec.points_per_frame));
    std::vector<Vec3> world;
    world.reserve(static_cast<std::size_t>(spec.points_per_frame));
    const Mat3 rt = gt.rotation().transpose();
    for (int j = 0; j < spec.points_per_frame; ++j) {
      const double x = centre.x() + uniform(-0.5, 0.5) * spec.footprint.x();
      const double y = centre.y() + uniform(-0.5, 0.5) * spec.footprint.y();
      const double z = spec.surface.height(x, y) + spec.noise_sigma * noise(rng);
      const Vec3 w(x, y, z);
      world.push_back(w);
      cloud.points.push_back(rt * (w - gt.t));
    }

    Pose init = gt;
    for (int k = 0; k < 3; ++k) init.t[k] += uniform(-spec.perturb_translation, spec.perturb_translation);
    for (int k = 0; k < 3; ++k) init.theta[k] += uniform(-spec.perturb_rotation, spec.perturb_rotation);
    init.normalize();

    scene.clouds.push_back(std::move(cloud));
    scene.ground_truth.push_back(gt);
    scene.initial.push_back(init);
    scene.global_points.push_back(std::move(world));
  }
  return scene;
}

/// `count` bumps with centres uniform over the extent, sigma in
/// [sigma_min, sigma_min + sigma_span) and amplitude (u - 0.4) * amplitude_scale.
inline std::vector<GaussianBump> scatter_bumps(const Vec2& extent, int count, double sigma_min, double sigma_span,
                                               double amplitude_scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GaussianBump> out;
  for (int k = 0; k < count; ++k) {
    GaussianBump b;
    b.centre.x() = extent.x() * u(rng);
    b.centre.y() = extent.y() * u(rng);
    b.sigma = sigma_min + sigma_span * u(rng);
    b.amplitude = (u(rng) - 0.4) * amplitude_scale;
    out.push_back(b);
  }
  return out;
}

/// 10 frames over 3 x 3 m of bumps, 2 mm noise, 0.05 m / 2 deg start error.
inline SceneSpec bumps_scene() {
  SceneSpec spec;
  spec.surface.kind = Surface::Kind::GaussianBumps;
  spec.surface.bumps = scatter_bumps({3.0, 3.0}, 20, 0.18, 0.2, 0.4, 11);
  spec.extent = {3.0, 3.0};
  spec.frames = 10;
  spec.footprint = {1.8, 1.8};
  spec.points_per_frame = 2000;
  spec.noise_sigma = 0.002;
  spec.perturb_translation = 0.05;
  spec.perturb_rotation = 2.0 * M_PI / 180.0;
  spec.seed = 1;
  return spec;
}

/// 21 frames in a 7 x 3 serpentine over 7 x 6 m, camera 3 m above the floor.
inline SceneSpec industrial_scene() {
  SceneSpec spec;
  spec.surface.kind = Surface::Kind::GaussianBumps;
  spec.surface.bumps = scatter_bumps({7.0, 6.0}, 25, 0.25, 0.3, 0.5, 3);
  spec.extent = {7.0, 6.0};
  spec.frames = 21;
  spec.grid_cols = 7;
  spec.footprint = {3.5, 3.5};
  spec.points_per_frame = 5000;
  spec.noise_sigma = 0.002;
  spec.perturb_translation = 0.05;
  spec.perturb_rotation = 2.0 * M_PI / 180.0;
  spec.camera_height = 3.0;
  spec.seed = 7;
  return spec;
}

/// Central-difference Jacobian of f at x.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("fd_jacobian: h must be positive");
  const Eigen::Index rows = f(x).size();
  Eigen::MatrixXd j(rows, x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + h;
    const Eigen::VectorXd up = f(probe);
    probe[k] = x[k] - h;
    const Eigen::VectorXd down = f(probe);
    probe[k] = x[k];
    if (up.size() != rows || down.size() != rows) throw Error("fd_jacobian: residual count changed under perturbation");
    j.col(k) = (up - down) / (2.0 * h);
  }
  return j;
}

/// Naive recomputation of w_D * sum depth^2 + w_S * sum smooth^2.
///
/// Rotation via axis-angle products, its own bilinear lookup, and the three
/// smoothing sums written out separately. Points outside the grid are skipped.
inline double brute_force_cost(std::span<const Pose> poses, const DepthMap& map, std::span<const PointCloud> clouds,
                               double w_depth, double w_smooth) {
  const int lm = map.rows(), ln = map.cols();
  const double s = map.resolution();
  const Eigen::VectorXd& raw = map.values();
  auto d = [&](int m, int n) -> long double { return raw[static_cast<Eigen::Index>(m) * ln + n]; };

  long double depth_sum = 0.0L;
  for (std::size_t i = 0; i < clouds.size() && i < poses.size(); ++i) {
    const Eigen::Matrix3d r = (Eigen::AngleAxisd(poses[i].theta[2], Eigen::Vector3d::UnitZ()) *
                               Eigen::AngleAxisd(poses[i].theta[1], Eigen::Vector3d::UnitY()) *
                               Eigen::AngleAxisd(poses[i].theta[0], Eigen::Vector3d::UnitX()))
                                  .toRotationMatrix();
    for (const Vec3& p : clouds[i].points) {
      const double x = r(0, 0) * p[0] + r(0, 1) * p[1] + r(0, 2) * p[2] + poses[i].t[0];
      const double y = r(1, 0) * p[0] + r(1, 1) * p[1] + r(1, 2) * p[2] + poses[i].t[1];
      const double z = r(2, 0) * p[0] + r(2, 1) * p[1] + r(2, 2) * p[2] + poses[i].t[2];
      const double gx = (x - map.origin()[0]) / s;
      const double gy = (y - map.origin()[1]) / s;
      if (gx < 0.0 || gy < 0.0 || gx > lm - 1 || gy > ln - 1) continue;
      int m = static_cast<int>(gx);
      int n = static_cast<int>(gy);
      if (m == lm - 1) --m;
      if (n == ln - 1) --n;
      const long double u = gx - m, v = gy - n;
      const long double interp = d(m, n) * (1 - u) * (1 - v) + d(m + 1, n) * u * (1 - v) +
                                 d(m, n + 1) * (1 - u) * v + d(m + 1, n + 1) * u * v;
      const long double res = z - interp;
      depth_sum += res * res;
    }
  }

  long double smooth_sum = 0.0L;
  for (int m = 0; m < lm - 1; ++m) {
    for (int n = 0; n < ln - 1; ++n) {
      const long double a = d(m, n) - d(m + 1, n);
      const long double b = d(m, n) - d(m, n + 1);
      smooth_sum += a * a + b * b;
    }
  }
  for (int n = 0; n < ln - 1; ++n) {
    const long double a = d(lm - 1, n) - d(lm - 1, n + 1);
    smooth_sum += a * a;
  }
  for (int m = 0; m < lm - 1; ++m) {
    const long double a = d(m, ln - 1) - d(m + 1, ln - 1);
    smooth_sum += a * a;
  }
  return static_cast<double>(w_depth * depth_sum + w_smooth * smooth_sum);
}

}  // namespace depthreg::synth
