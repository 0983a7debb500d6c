#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "depthreg/error.hpp"
#include "depthreg/geometry.hpp"
#include "depthreg/numeric.hpp"
#include "depthreg/point_cloud.hpp"

namespace depthreg {

// Shape and placement of the global grid. Node (m, n) sits at world
// origin + s * (m, n); m runs along world x, n along world y.
struct GridGeometry {
  int rows = 0;  // l_m, nodes along x
  int cols = 0;  // l_n, nodes along y
  double resolution = 0.0;
  Vec2 origin = Vec2::Zero();

  void validate() const {
    if (rows < 2 || cols < 2) throw InvalidArgument("depth map needs at least 2x2 nodes");
    if (!(resolution > 0.0) || !std::isfinite(resolution)) {
      throw InvalidArgument("depth map resolution must be positive");
    }
    if (!origin.allFinite()) throw InvalidArgument("depth map origin must be finite");
  }

  int cells() const { return rows * cols; }
  int index(int m, int n) const { return m * cols + n; }

  /// Continuous 0-based grid coordinate of a world x-y position.
  Vec2 to_grid(const Vec2& xy) const { return (xy - origin) / resolution; }
  Vec2 to_world(const Vec2& q) const { return origin + q * resolution; }

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// Base cell and bilinear weights of a query inside the grid.
///
/// Weights are ordered (m,n), (m+1,n), (m,n+1), (m+1,n+1).
struct GridLocator {
  int m = 0;
  int n = 0;
  double fx = 0.0;  // fractional offset along m
  double fy = 0.0;  // fractional offset along n
  std::array<double, 4> weights{};

  std::array<int, 4> node_indices(const GridGeometry& g) const {
    return {g.index(m, n), g.index(m + 1, n), g.index(m, n + 1), g.index(m + 1, n + 1)};
  }
};

/// Locates q (0-based grid units). Nullopt when q has no four neighbours.
inline std::optional<GridLocator> locate(const GridGeometry& g, const Vec2& q) {
  if (!(q.x() >= 0.0 && q.x() <= g.rows - 1 && q.y() >= 0.0 && q.y() <= g.cols - 1)) {
    return std::nullopt;
  }
  GridLocator loc;
  loc.m = std::min(static_cast<int>(std::floor(q.x())), g.rows - 2);
  loc.n = std::min(static_cast<int>(std::floor(q.y())), g.cols - 2);
  loc.fx = q.x() - loc.m;
  loc.fy = q.y() - loc.n;
  loc.weights = {(1.0 - loc.fx) * (1.0 - loc.fy), loc.fx * (1.0 - loc.fy), (1.0 - loc.fx) * loc.fy,
                 loc.fx * loc.fy};
  return loc;
}

// The global 2.5D map: one depth per grid node plus observation bookkeeping
// from initialisation.
class DepthMap {
 public:
  DepthMap() = default;

  explicit DepthMap(const GridGeometry& geometry, double fill = 0.0)
      : geometry_(geometry),
        values_(Eigen::VectorXd::Constant(geometry.cells(), fill)),
        counts_(static_cast<std::size_t>(geometry.cells()), 0),
        z_variance_(static_cast<std::size_t>(geometry.cells()), 0.0) {
    geometry_.validate();
  }

  const GridGeometry& geometry() const { return geometry_; }
  int rows() const { return geometry_.rows; }
  int cols() const { return geometry_.cols; }
  double resolution() const { return geometry_.resolution; }
  const Vec2& origin() const { return geometry_.origin; }

  double value(int m, int n) const { return values_[geometry_.index(m, n)]; }
  double& value(int m, int n) { return values_[geometry_.index(m, n)]; }

  // Row-major (m * cols + n) storage; this is the map block of the state vector.
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  bool observed(int m, int n) const { return counts_[geometry_.index(m, n)] > 0; }
  int obs_count(int m, int n) const { return counts_[geometry_.index(m, n)]; }
  const std::vector<int>& obs_counts() const { return counts_; }

  // Population variance of binned z per cell; large values flag surfaces that
  // are not single-valued over x-y.
  double z_variance(int m, int n) const { return z_variance_[geometry_.index(m, n)]; }
  const std::vector<double>& z_variances() const { return z_variance_; }

  int observed_cells() const {
    return static_cast<int>(std::count_if(counts_.begin(), counts_.end(), [](int c) { return c > 0; }));
  }
  long total_observations() const {
    long s = 0;
    for (int c : counts_) s += c;
    return s;
  }

  /// Average number of binned points per observed cell (0 when nothing was observed).
  double mean_points_per_cell() const {
    const int obs = observed_cells();
    return obs == 0 ? 0.0 : static_cast<double>(total_observations()) / obs;
  }

  void set_observations(std::vector<int> counts, std::vector<double> z_variance) {
    counts_ = std::move(counts);
    z_variance_ = std::move(z_variance);
  }

 private:
  GridGeometry geometry_;
  Eigen::VectorXd values_;
  std::vector<int> counts_;
  std::vector<double> z_variance_;
};

/// Bounding grid of all projected points, padded by `margin` cells per side.
///
/// Bounds snap outward to multiples of the resolution, so a lone point lands
/// on a node.
inline GridGeometry fit_bounds(std::span<const PointCloud> clouds, std::span<const Pose> poses,
                               double resolution, int margin) {
  if (clouds.size() != poses.size()) throw InvalidArgument("fit_bounds: cloud/pose count mismatch");
  if (!(resolution > 0.0)) throw InvalidArgument("fit_bounds: resolution must be positive");
  if (margin < 0) throw InvalidArgument("fit_bounds: margin must be non-negative");

  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  std::size_t total = 0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const Mat3 r = poses[i].rotation();
    for (const Vec3& p : clouds[i].points) {
      const Vec3 w = r * p + poses[i].t;
      lo = lo.cwiseMin(w.head<2>());
      hi = hi.cwiseMax(w.head<2>());
      ++total;
    }
  }
  if (total == 0) throw InvalidArgument("no points");

  GridGeometry g;
  g.resolution = resolution;
  Vec2 first, last;
  for (int k = 0; k < 2; ++k) {
    first[k] = std::floor(lo[k] / resolution) - margin;
    last[k] = std::ceil(hi[k] / resolution) + margin;
  }
  g.origin = first * resolution;
  g.rows = std::max(2, static_cast<int>(std::llround(last.x() - first.x())) + 1);
  g.cols = std::max(2, static_cast<int>(std::llround(last.y() - first.y())) + 1);
  return g;
}

namespace detail {

// Harmonic fill of unobserved nodes: each hole takes the mean of its 4
// neighbours, with observed nodes as fixed boundary values. Hole regions that
// touch no observed node get `fallback`.
inline void fill_holes(DepthMap& map, double fallback) {
  const GridGeometry& g = map.geometry();
  const int cells = g.cells();
  const auto& counts = map.obs_counts();

  std::vector<int> component(cells, -1);
  std::vector<bool> component_anchored;
  int components = 0;
  for (int start = 0; start < cells; ++start) {
    if (counts[start] > 0 || component[start] >= 0) continue;
    bool anchored = false;
    std::queue<int> frontier;
    frontier.push(start);
    component[start] = components;
    while (!frontier.empty()) {
      const int c = frontier.front();
      frontier.pop();
      const int m = c / g.cols, n = c % g.cols;
      const std::array<std::pair<int, int>, 4> nbrs{{{m - 1, n}, {m + 1, n}, {m, n - 1}, {m, n + 1}}};
      for (auto [a, b] : nbrs) {
        if (a < 0 || a >= g.rows || b < 0 || b >= g.cols) continue;
        const int k = g.index(a, b);
        if (counts[k] > 0) {
          anchored = true;
        } else if (component[k] < 0) {
          component[k] = components;
          frontier.push(k);
        }
      }
    }
    component_anchored.push_back(anchored);
    ++components;
  }
  if (components == 0) return;

  std::vector<int> unknown(cells, -1);
  int unknowns = 0;
  for (int c = 0; c < cells; ++c) {
    if (counts[c] > 0) continue;
    if (component_anchored[component[c]]) {
      unknown[c] = unknowns++;
    } else {
      map.values()[c] = fallback;
    }
  }
  if (unknowns == 0) return;

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(unknowns);
  for (int c = 0; c < cells; ++c) {
    const int row = unknown[c];
    if (row < 0) continue;
    const int m = c / g.cols, n = c % g.cols;
    double degree = 0.0;
    const std::array<std::pair<int, int>, 4> nbrs{{{m - 1, n}, {m + 1, n}, {m, n - 1}, {m, n + 1}}};
    for (auto [a, b] : nbrs) {
      if (a < 0 || a >= g.rows || b < 0 || b >= g.cols) continue;
      const int k = g.index(a, b);
      degree += 1.0;
      if (unknown[k] >= 0) {
        triplets.emplace_back(row, unknown[k], -1.0);
      } else {
        rhs[row] += map.values()[k];
      }
    }
    triplets.emplace_back(row, row, degree);
  }
  Eigen::SparseMatrix<double> laplacian(unknowns, unknowns);
  laplacian.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(laplacian);
  if (ldlt.info() != Eigen::Success) throw Error("depth map hole fill: factorisation failed");
  const Eigen::VectorXd filled = ldlt.solve(rhs);
  for (int c = 0; c < cells; ++c) {
    if (unknown[c] >= 0) map.values()[c] = filled[unknown[c]];
  }
}

}  // namespace detail

/// Builds the map by averaging projected z per nearest node, then fills holes.
///
/// Points outside the grid are ignored. An all-unobserved result is legal;
/// check observed_cells() before use.
inline DepthMap initialize(std::span<const PointCloud> clouds, std::span<const Pose> poses,
                           const GridGeometry& geometry) {
  if (clouds.size() != poses.size()) throw InvalidArgument("initialize: cloud/pose count mismatch");
  DepthMap map(geometry);
  const int cells = geometry.cells();

  // Bin membership first, so both moments are compensated sums over the same
  // set regardless of input order.
  std::vector<std::vector<double>> binned(cells);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const Mat3 r = poses[i].rotation();
    for (const Vec3& p : clouds[i].points) {
      const Vec3 w = r * p + poses[i].t;
      const Vec2 q = geometry.to_grid(w.head<2>());
      const long m = std::lround(q.x());
      const long n = std::lround(q.y());
      if (m < 0 || m >= geometry.rows || n < 0 || n >= geometry.cols) continue;
      binned[geometry.index(static_cast<int>(m), static_cast<int>(n))].push_back(w.z());
    }
  }

  std::vector<int> counts(cells, 0);
  std::vector<double> variance(cells, 0.0);
  CompensatedSum global_sum;
  long global_count = 0;
  for (int c = 0; c < cells; ++c) {
    const auto& zs = binned[c];
    if (zs.empty()) continue;
    CompensatedSum sum;
    for (double z : zs) sum += z;
    const double mean = sum.value() / static_cast<double>(zs.size());
    CompensatedSum sq;
    for (double z : zs) sq += (z - mean) * (z - mean);
    map.values()[c] = mean;
    counts[c] = static_cast<int>(zs.size());
    variance[c] = sq.value() / static_cast<double>(zs.size());
    for (double z : zs) global_sum += z;
    global_count += static_cast<long>(zs.size());
  }
  map.set_observations(std::move(counts), std::move(variance));

  const double fallback = global_count > 0 ? global_sum.value() / static_cast<double>(global_count) : 0.0;
  detail::fill_holes(map, fallback);
  return map;
}

/// Bilinear depth at grid coordinate q; nullopt outside the grid.
inline std::optional<double> interpolate(const DepthMap& map, const Vec2& q) {
  const auto loc = locate(map.geometry(), q);
  if (!loc) return std::nullopt;
  const auto idx = loc->node_indices(map.geometry());
  const auto& v = map.values();
  return loc->weights[0] * v[idx[0]] + loc->weights[1] * v[idx[1]] + loc->weights[2] * v[idx[2]] +
         loc->weights[3] * v[idx[3]];
}

/// Per-node depth gradient in grid units: central differences inside,
/// one-sided differences on the border.
inline std::vector<Vec2> node_gradients(const DepthMap& map) {
  const int rows = map.rows(), cols = map.cols();
  std::vector<Vec2> grads(static_cast<std::size_t>(rows * cols));
  for (int m = 0; m < rows; ++m) {
    for (int n = 0; n < cols; ++n) {
      double gx, gy;
      if (m == 0) {
        gx = map.value(1, n) - map.value(0, n);
      } else if (m == rows - 1) {
        gx = map.value(m, n) - map.value(m - 1, n);
      } else {
        gx = 0.5 * (map.value(m + 1, n) - map.value(m - 1, n));
      }
      if (n == 0) {
        gy = map.value(m, 1) - map.value(m, 0);
      } else if (n == cols - 1) {
        gy = map.value(m, n) - map.value(m, n - 1);
      } else {
        gy = 0.5 * (map.value(m, n + 1) - map.value(m, n - 1));
      }
      grads[map.geometry().index(m, n)] = {gx, gy};
    }
  }
  return grads;
}

/// Bilinear blend of the node gradients around q; nullopt outside the grid.
inline std::optional<Vec2> interpolate_gradient(const DepthMap& map, std::span<const Vec2> gradients,
                                                const Vec2& q) {
  const auto loc = locate(map.geometry(), q);
  if (!loc) return std::nullopt;
  const auto idx = loc->node_indices(map.geometry());
  Vec2 g = Vec2::Zero();
  for (int k = 0; k < 4; ++k) g += loc->weights[k] * gradients[idx[k]];
  return g;
}

/// Exact derivative of the bilinear interpolant inside the located cell.
inline Vec2 bilinear_gradient(const DepthMap& map, const GridLocator& loc) {
  const auto& v = map.values();
  const auto idx = loc.node_indices(map.geometry());
  const double d00 = v[idx[0]], d10 = v[idx[1]], d01 = v[idx[2]], d11 = v[idx[3]];
  return {(1.0 - loc.fy) * (d10 - d00) + loc.fy * (d11 - d01),
          (1.0 - loc.fx) * (d01 - d00) + loc.fx * (d11 - d10)};
}

// ---- export ---------------------------------------------------------------

/// Plain-text export: header line then one comma-separated line per m.
inline void write_depth_map_csv(const DepthMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << std::setprecision(17);
  out << "# depthmap s=" << map.resolution() << " origin=" << map.origin().x() << ","
      << map.origin().y() << "\n";
  for (int m = 0; m < map.rows(); ++m) {
    for (int n = 0; n < map.cols(); ++n) {
      if (n) out << ',';
      out << map.value(m, n);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline DepthMap read_depth_map_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string header;
  std::getline(in, header);
  double s = 0.0, ox = 0.0, oy = 0.0;
  if (std::sscanf(header.c_str(), "# depthmap s=%lf origin=%lf,%lf", &s, &ox, &oy) != 3) {
    throw ParseError(path, ParseError::Unit::Line, 1, "expected '# depthmap s=<res> origin=<x>,<y>'");
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError(path, ParseError::Unit::Line, line_no, "bad value '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path, ParseError::Unit::Line, line_no, "ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path, ParseError::Unit::Line, line_no, "no rows");
  GridGeometry g{static_cast<int>(rows.size()), static_cast<int>(rows.front().size()), s, {ox, oy}};
  DepthMap map(g);
  for (int m = 0; m < g.rows; ++m) {
    for (int n = 0; n < g.cols; ++n) map.value(m, n) = rows[m][n];
  }
  return map;
}

/// 16-bit binary PGM (width = cols, height = rows). Pixel p maps back to
/// depth = z_min + p * (z_max - z_min) / 65535; both bounds are written in a
/// header comment.
inline void write_depth_map_pgm(const DepthMap& map, const std::string& path) {
  const auto& v = map.values();
  const double lo = v.minCoeff(), hi = v.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n# depth = z_min + pixel * (z_max - z_min) / 65535\n"
      << std::setprecision(17) << "# z_min=" << lo << " z_max=" << hi << "\n"
      << map.cols() << " " << map.rows() << "\n65535\n";
  for (int m = 0; m < map.rows(); ++m) {
    for (int n = 0; n < map.cols(); ++n) {
      const auto p = static_cast<std::uint16_t>(std::lround((map.value(m, n) - lo) / span * 65535.0));
      const char be[2] = {static_cast<char>(p >> 8), static_cast<char>(p & 0xff)};
      out.write(be, 2);
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace depthreg
