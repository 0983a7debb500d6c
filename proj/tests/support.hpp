#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "depthreg/depth_map.hpp"
#include "depthreg/point_cloud.hpp"

namespace testing_support {

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("depthreg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small generator helpers for property tests.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  depthreg::Vec3 vec3(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }

  depthreg::DepthMap random_map(int rows, int cols, double s = 0.1, double lo = 0.0, double hi = 1.0) {
    depthreg::DepthMap map(depthreg::GridGeometry{rows, cols, s, {uniform(-1, 1), uniform(-1, 1)}});
    for (int c = 0; c < map.geometry().cells(); ++c) map.values()[c] = uniform(lo, hi);
    return map;
  }
};

// One frame at the identity pose holding world points directly.
inline depthreg::PointCloud world_cloud(std::vector<depthreg::Vec3> points, const std::string& id = "f0") {
  return depthreg::PointCloud{id, std::move(points)};
}

}  // namespace testing_support
