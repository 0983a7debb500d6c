#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "depthreg/depth_map.hpp"
#include "depthreg/problem.hpp"
#include "depthreg/synth.hpp"

namespace depthreg {

struct RandomProblemSpec {
  int frames = 5;
  int grid = 20;  // nodes per side
  double resolution = 0.1;
  int points_per_frame = 200;
  double edge_clearance = 1e-3;  // minimum distance to a cell edge, grid units
  std::uint64_t seed = 1;
};

struct RandomProblem {
  std::vector<PointCloud> clouds;
  ProblemState state;
};

/// Random poses, a random map and points that project at least
/// `edge_clearance` grid units away from every cell edge and one cell inside
/// the border.
inline RandomProblem make_random_problem(const RandomProblemSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  GridGeometry g{spec.grid, spec.grid, spec.resolution, Vec2(-0.37, 0.21)};
  RandomProblem out;
  out.state.map = DepthMap(g);
  for (int c = 0; c < g.cells(); ++c) out.state.map.values()[c] = uniform(0.0, 0.4);

  const double span = (spec.grid - 1) * spec.resolution;
  for (int i = 0; i < spec.frames; ++i) {
    Pose pose;
    pose.t = Vec3(g.origin.x() + span * uniform(0.4, 0.6), g.origin.y() + span * uniform(0.4, 0.6), uniform(0.8, 1.2));
    pose.theta = Vec3(uniform(-0.3, 0.3), uniform(-0.3, 0.3), uniform(-3.0, 3.0));
    const Mat3 rt = pose.rotation().transpose();
    PointCloud cloud;
    cloud.frame_id = synth::frame_name(i);
    while (static_cast<int>(cloud.points.size()) < spec.points_per_frame) {
      const Vec2 q(uniform(1.0, spec.grid - 2.0), uniform(1.0, spec.grid - 2.0));
      const auto near_edge = [&](double v) {
        const double f = v - std::floor(v);
        return std::min(f, 1.0 - f) < spec.edge_clearance;
      };
      if (near_edge(q.x()) || near_edge(q.y())) continue;
      const Vec2 xy = g.to_world(q);
      const Vec3 w(xy.x(), xy.y(), uniform(0.0, 0.4));
      cloud.points.push_back(rt * (w - pose.t));
    }
    out.state.poses.push_back(pose);
    out.clouds.push_back(std::move(cloud));
  }
  return out;
}

struct JacobianCheck {
  double pose_error = 0.0;       // J_P: depth rows x pose columns
  double map_error = 0.0;        // J_D: depth rows x map columns
  double smoothing_error = 0.0;  // J_S: smoothing rows x all columns
  int rows = 0;
  int cols = 0;
};

/// |a - f| / max(1, |a|, |f|).
inline double jacobian_entry_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

/// Largest entry error between the assembled Jacobian and central differences.
///
/// J_S is checked at a zero map with unit steps; the smoothing term is linear,
/// so differences there are exact.
inline JacobianCheck check_jacobian(const ProblemState& state, std::span<const PointCloud> clouds,
                                    const ProblemOptions& options, double h = 1e-6, double corrupt = 0.0) {
  const Problem problem(clouds, options);
  const Assembly a = problem.assemble(state, true);
  Eigen::MatrixXd analytic = Eigen::MatrixXd(a.jacobian);
  const IndexLayout layout = state.layout();
  if (corrupt != 0.0 && layout.pose_dim() > 0) analytic(0, 0) += corrupt;

  ProblemState probe = state;
  const auto residuals = [&](const Eigen::VectorXd& x) {
    probe.unpack(x);
    return Eigen::VectorXd(problem.assemble(probe, false).residuals);
  };
  const Eigen::MatrixXd numeric = synth::fd_jacobian(residuals, state.pack(), h);

  JacobianCheck out;
  out.rows = static_cast<int>(analytic.rows());
  out.cols = static_cast<int>(analytic.cols());
  for (int r = 0; r < a.depth_rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      const double e = jacobian_entry_error(analytic(r, c), numeric(r, c));
      if (c < layout.pose_dim()) {
        out.pose_error = std::max(out.pose_error, e);
      } else {
        out.map_error = std::max(out.map_error, e);
      }
    }
  }

  ProblemState zero = state;
  zero.map.values().setZero();
  const Eigen::SparseMatrix<double, Eigen::RowMajor> js = smoothing_jacobian(state.map.geometry());
  const auto smooth = [&](const Eigen::VectorXd& x) {
    probe = zero;
    probe.unpack(x);
    const auto blocks = smoothing_residuals(probe.map);
    Eigen::VectorXd r(static_cast<Eigen::Index>(blocks.size()));
    for (std::size_t k = 0; k < blocks.size(); ++k) r[static_cast<Eigen::Index>(k)] = blocks[k].value;
    return r;
  };
  const Eigen::MatrixXd smooth_numeric = synth::fd_jacobian(smooth, zero.pack(), 1.0);
  for (int r = 0; r < a.smoothing_rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      const double expected = c < layout.pose_dim() ? 0.0 : js.coeff(r, c - layout.pose_dim());
      out.smoothing_error = std::max({out.smoothing_error, jacobian_entry_error(analytic(a.depth_rows + r, c), smooth_numeric(r, c)),
                                      jacobian_entry_error(expected, smooth_numeric(r, c))});
    }
  }
  return out;
}

}  // namespace depthreg
