#pragma once

#include <optional>
#include <span>
#include <vector>

#include "depthreg/depth_map.hpp"
#include "depthreg/error.hpp"
#include "depthreg/problem.hpp"
#include "depthreg/solver.hpp"

namespace depthreg {

struct RegistrationConfig {
  double resolution = 0.05;
  int margin = 4;  // cells of padding around the projected points
  double depth_weight = 1.0;
  std::optional<double> smooth_weight;  // unset: default_weights()
  ProblemOptions problem;               // weights are filled in from the fields above
  SolverConfig solver;
  int fixed_pose = 0;
};

struct RegistrationResult {
  SolveResult solution;
  Weights weights;
  GridGeometry geometry;
};

/// Map bounds and the initial map from the starting poses.
inline ProblemState initial_state(std::span<const PointCloud> clouds, std::span<const Pose> initial,
                                  const RegistrationConfig& config) {
  if (clouds.empty()) throw InvalidArgument("no point clouds");
  if (clouds.size() != initial.size()) throw InvalidArgument("cloud/pose count mismatch");
  ProblemState state;
  state.poses.assign(initial.begin(), initial.end());
  state.fixed_pose = config.fixed_pose;
  state.map = initialize(clouds, initial, fit_bounds(clouds, initial, config.resolution, config.margin));
  return state;
}

inline RegistrationResult register_clouds(std::span<const PointCloud> clouds, std::span<const Pose> initial,
                                          const RegistrationConfig& config) {
  ProblemState state = initial_state(clouds, initial, config);
  ProblemOptions options = config.problem;
  options.weights = default_weights(state.map);
  options.weights.depth = config.depth_weight;
  if (config.smooth_weight) options.weights.smooth = *config.smooth_weight;
  const GridGeometry geometry = state.map.geometry();
  auto solution = solve(std::move(state), clouds, options, config.solver);
  return {std::move(solution), options.weights, geometry};
}

}  // namespace depthreg
