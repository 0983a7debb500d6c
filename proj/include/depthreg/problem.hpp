#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>

#include "depthreg/depth_map.hpp"
#include "depthreg/error.hpp"
#include "depthreg/geometry.hpp"
#include "depthreg/numeric.hpp"
#include "depthreg/point_cloud.hpp"

namespace depthreg {

// ---- state layout -----------------------------------------------------------

/// Maps state-vector offsets to pose components and map cells.
///
/// Layout: [pose 0..N-1 minus the fixed one, 6 entries each (tx ty tz rx ry rz)
/// | map cells row-major].
class IndexLayout {
 public:
  struct Entry {
    enum class Kind { Pose, Cell } kind;
    int frame = -1;      // Pose
    int component = -1;  // Pose, 0..5
    int cell = -1;       // Cell, m * cols + n
  };

  IndexLayout() = default;
  IndexLayout(int frames, int fixed_frame, int cells)
      : frames_(frames), fixed_(fixed_frame), cells_(cells) {
    if (frames < 1) throw InvalidArgument("layout needs at least one frame");
    if (fixed_frame < 0 || fixed_frame >= frames) throw InvalidArgument("fixed pose index out of range");
  }

  int frames() const { return frames_; }
  int fixed_frame() const { return fixed_; }
  int pose_dim() const { return 6 * (frames_ - 1); }
  int dim() const { return pose_dim() + cells_; }

  /// First state index of frame i's pose block, or nullopt for the fixed pose.
  std::optional<int> pose_offset(int frame) const {
    if (frame == fixed_) return std::nullopt;
    return 6 * (frame < fixed_ ? frame : frame - 1);
  }
  int cell_offset(int cell) const { return pose_dim() + cell; }

  Entry decode(int index) const {
    if (index < 0 || index >= dim()) throw InvalidArgument("state index out of range");
    if (index >= pose_dim()) return {Entry::Kind::Cell, -1, -1, index - pose_dim()};
    int frame = index / 6;
    if (frame >= fixed_) ++frame;
    return {Entry::Kind::Pose, frame, index % 6, -1};
  }

 private:
  int frames_ = 0;
  int fixed_ = 0;
  int cells_ = 0;
};

/// Poses and map being optimised, plus the gauge anchor.
struct ProblemState {
  std::vector<Pose> poses;
  DepthMap map;
  int fixed_pose = 0;

  IndexLayout layout() const { return {static_cast<int>(poses.size()), fixed_pose, map.geometry().cells()}; }

  Eigen::VectorXd pack() const {
    const IndexLayout lay = layout();
    Eigen::VectorXd x(lay.dim());
    for (int i = 0; i < static_cast<int>(poses.size()); ++i) {
      if (auto off = lay.pose_offset(i)) {
        x.segment<3>(*off) = poses[i].t;
        x.segment<3>(*off + 3) = poses[i].theta;
      }
    }
    x.tail(map.geometry().cells()) = map.values();
    return x;
  }

  /// Overwrites the free variables from a packed vector (no angle wrapping).
  void unpack(const Eigen::VectorXd& x) {
    const IndexLayout lay = layout();
    if (x.size() != lay.dim()) throw InvalidArgument("state vector has wrong dimension");
    for (int i = 0; i < static_cast<int>(poses.size()); ++i) {
      if (auto off = lay.pose_offset(i)) {
        poses[i].t = x.segment<3>(*off);
        poses[i].theta = x.segment<3>(*off + 3);
      }
    }
    map.values() = x.tail(map.geometry().cells());
  }

  /// x <- x + delta, then angles wrapped into (-pi, pi]. The fixed pose is untouched.
  void apply_step(const Eigen::VectorXd& delta) {
    const IndexLayout lay = layout();
    if (delta.size() != lay.dim()) throw InvalidArgument("step has wrong dimension");
    for (int i = 0; i < static_cast<int>(poses.size()); ++i) {
      if (auto off = lay.pose_offset(i)) {
        poses[i].t += delta.segment<3>(*off);
        poses[i].theta += delta.segment<3>(*off + 3);
        poses[i].normalize();
      }
    }
    map.values() += delta.tail(map.geometry().cells());
  }
};

// ---- residual terms ---------------------------------------------------------

/// Which map slope feeds the pose Jacobian.
enum class GradientMode {
  // Exact derivative of the bilinear interpolant in the point's cell. Jumps
  // across cell edges, which stalls Gauss-Newton; used for derivative checks.
  Bilinear,
  // Bilinear blend of central-difference node gradients. Continuous; the
  // solver default.
  NodeInterpolated,
};

struct Weights {
  double depth = 1.0;
  double smooth = 0.0;
};

inline constexpr double kDefaultSmoothingFactor = 0.01;

/// Default weights: w_D = 1, w_S = 0.01 * average points per observed cell.
///
/// The smoothing term penalises slope, so a heavy w_S pulls frames toward a
/// level map; larger values trade pose accuracy for smoother hole filling.
inline Weights default_weights(const DepthMap& map) {
  return {1.0, kDefaultSmoothingFactor * map.mean_points_per_cell()};
}

/// One depth-constraint row: value, 1x6 pose block and the four map entries.
struct DepthTerm {
  double residual = 0.0;
  Eigen::Matrix<double, 1, 6> pose_jacobian = Eigen::Matrix<double, 1, 6>::Zero();
  std::array<int, 4> cells{};
  std::array<double, 4> map_jacobian{};
};

namespace detail {

struct PoseCache {
  Mat3 r;
  RotationDerivatives d;
  Vec3 t;

  explicit PoseCache(const Pose& pose) : r(pose.rotation()), d(rotation_derivatives(pose.theta)), t(pose.t) {}
};

inline std::optional<DepthTerm> depth_term(const Vec3& p, const PoseCache& pc, const DepthMap& map,
                                           GradientMode mode, std::span<const Vec2> node_grads,
                                           bool with_jacobian) {
  const Vec3 w = pc.r * p + pc.t;
  const auto loc = locate(map.geometry(), map.geometry().to_grid(w.head<2>()));
  if (!loc) return std::nullopt;

  DepthTerm term;
  term.cells = loc->node_indices(map.geometry());
  const auto& v = map.values();
  double depth = 0.0;
  for (int k = 0; k < 4; ++k) depth += loc->weights[k] * v[term.cells[k]];
  term.residual = w.z() - depth;
  if (!with_jacobian) return term;

  Vec2 slope;
  if (mode == GradientMode::Bilinear) {
    slope = bilinear_gradient(map, *loc);
  } else {
    slope.setZero();
    for (int k = 0; k < 4; ++k) slope += loc->weights[k] * node_grads[term.cells[k]];
  }
  // d(p')/dX = [I | dR/dtheta_k p]; the map is sampled at p'_xy / s, hence 1/s.
  const double inv_s = 1.0 / map.resolution();
  Eigen::Matrix<double, 3, 6> dp;
  dp.leftCols<3>().setIdentity();
  for (int k = 0; k < 3; ++k) dp.col(3 + k) = pc.d[k] * p;
  term.pose_jacobian = dp.row(2) - inv_s * (slope.x() * dp.row(0) + slope.y() * dp.row(1));
  for (int k = 0; k < 4; ++k) term.map_jacobian[k] = -loc->weights[k];
  return term;
}

}  // namespace detail

/// [R p + t]_z minus the interpolated map depth; nullopt when p' leaves the grid.
inline std::optional<double> depth_residual(const Vec3& p, const Pose& pose, const DepthMap& map) {
  const auto term = detail::depth_term(p, detail::PoseCache(pose), map, GradientMode::Bilinear, {}, false);
  if (!term) return std::nullopt;
  return term->residual;
}

/// Residual plus its pose and map Jacobian blocks. `node_grads` is required
/// for GradientMode::NodeInterpolated (see node_gradients()).
inline std::optional<DepthTerm> depth_jacobian(const Vec3& p, const Pose& pose, const DepthMap& map,
                                               GradientMode mode = GradientMode::Bilinear,
                                               std::span<const Vec2> node_grads = {}) {
  if (mode == GradientMode::NodeInterpolated &&
      node_grads.size() != static_cast<std::size_t>(map.geometry().cells())) {
    throw InvalidArgument("depth_jacobian: node gradients missing or wrong size");
  }
  return detail::depth_term(p, detail::PoseCache(pose), map, mode, node_grads, true);
}

// ---- smoothing term -----------------------------------------------------------

struct ResidualBlock {
  enum class Kind { Depth, Smooth } kind = Kind::Depth;
  double value = 0.0;
  double weight = 0.0;
  std::vector<std::pair<int, double>> entries;  // (state index, d value / d state)
};

/// Neighbour pairs (a, b) with residual D[a] - D[b]: for every node, its +m
/// neighbour then its +n neighbour where they exist.
inline std::vector<std::pair<int, int>> smoothing_pairs(const GridGeometry& g) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(2 * g.rows * g.cols - g.rows - g.cols));
  for (int m = 0; m < g.rows; ++m) {
    for (int n = 0; n < g.cols; ++n) {
      if (m + 1 < g.rows) pairs.emplace_back(g.index(m, n), g.index(m + 1, n));
      if (n + 1 < g.cols) pairs.emplace_back(g.index(m, n), g.index(m, n + 1));
    }
  }
  return pairs;
}

/// Smoothing residuals as blocks; entry indices are cell index + map_offset.
inline std::vector<ResidualBlock> smoothing_residuals(const DepthMap& map, double weight = 1.0,
                                                      int map_offset = 0) {
  const auto pairs = smoothing_pairs(map.geometry());
  std::vector<ResidualBlock> blocks;
  blocks.reserve(pairs.size());
  for (auto [a, b] : pairs) {
    blocks.push_back({ResidualBlock::Kind::Smooth, map.values()[a] - map.values()[b], weight,
                      {{a + map_offset, 1.0}, {b + map_offset, -1.0}}});
  }
  return blocks;
}

/// Constant Jacobian of the smoothing residuals w.r.t. the map cells
/// (pairs x cells, one +1 and one -1 per row).
inline Eigen::SparseMatrix<double, Eigen::RowMajor> smoothing_jacobian(const GridGeometry& g) {
  const auto pairs = smoothing_pairs(g);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * pairs.size());
  for (std::size_t row = 0; row < pairs.size(); ++row) {
    trips.emplace_back(static_cast<int>(row), pairs[row].first, 1.0);
    trips.emplace_back(static_cast<int>(row), pairs[row].second, -1.0);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> j(static_cast<Eigen::Index>(pairs.size()), g.cells());
  j.setFromTriplets(trips.begin(), trips.end());
  return j;
}

// ---- assembly -----------------------------------------------------------------

struct ProblemOptions {
  Weights weights;
  GradientMode gradient = GradientMode::NodeInterpolated;
  // Huber threshold on depth residuals, metres. Unset means plain least squares.
  std::optional<double> huber;
  int threads = 1;
};

/// Stacked residuals [depth rows; smoothing rows] with weights and Jacobian.
struct Assembly {
  Eigen::VectorXd residuals;
  Eigen::VectorXd weights;  // diagonal of W (after any robust reweighting)
  Eigen::SparseMatrix<double> jacobian;  // empty when not requested
  int depth_rows = 0;
  int smoothing_rows = 0;
  int skipped = 0;
  double depth_cost = 0.0;      // sum over depth rows of w_D * rho(r)
  double smoothing_cost = 0.0;  // sum over smoothing rows of w_S * r^2
  double cost = 0.0;
  std::vector<std::pair<int, int>> depth_sources;  // (frame, point) of each depth row
};

// Owns the clouds view and the cached constant smoothing pattern.
class Problem {
 public:
  Problem(std::span<const PointCloud> clouds, ProblemOptions options)
      : clouds_(clouds), options_(std::move(options)) {
    if (!(options_.weights.depth >= 0.0) || !(options_.weights.smooth >= 0.0)) {
      throw InvalidArgument("weights must be non-negative");
    }
    if (options_.huber && !(*options_.huber > 0.0)) throw InvalidArgument("huber threshold must be positive");
  }

  const ProblemOptions& options() const { return options_; }
  std::span<const PointCloud> clouds() const { return clouds_; }

  const std::vector<std::pair<int, int>>& pairs(const GridGeometry& g) const {
    if (!(g == pattern_geometry_)) {
      pattern_geometry_ = g;
      pairs_ = smoothing_pairs(g);
    }
    return pairs_;
  }

  Assembly assemble(const ProblemState& state, bool with_jacobian = true) const {
    if (state.poses.size() != clouds_.size()) throw InvalidArgument("assemble: pose/cloud count mismatch");
    const IndexLayout layout = state.layout();
    const DepthMap& map = state.map;
    const int frames = static_cast<int>(clouds_.size());

    std::vector<Vec2> node_grads;
    if (with_jacobian && options_.gradient == GradientMode::NodeInterpolated) node_grads = node_gradients(map);

    struct FrameTerms {
      std::vector<DepthTerm> terms;
      std::vector<int> points;
      int skipped = 0;
      long bad_point = -1;  // first non-finite input point
    };
    for (int i = 0; i < frames; ++i) {
      if (!state.poses[i].t.allFinite() || !state.poses[i].theta.allFinite()) {
        throw NonFiniteError("non-finite pose: frame " + std::to_string(i));
      }
    }
    std::vector<FrameTerms> per_frame(frames);
    parallel_for(static_cast<std::size_t>(frames), options_.threads, [&](std::size_t i) {
      const detail::PoseCache pc(state.poses[i]);
      auto& out = per_frame[i];
      out.terms.reserve(clouds_[i].size());
      out.points.reserve(clouds_[i].size());
      for (std::size_t j = 0; j < clouds_[i].points.size(); ++j) {
        if (!clouds_[i].points[j].allFinite()) {
          out.bad_point = static_cast<long>(j);
          return;
        }
        auto term = detail::depth_term(clouds_[i].points[j], pc, map, options_.gradient, node_grads, with_jacobian);
        if (!term) {
          ++out.skipped;
          continue;
        }
        out.terms.push_back(*term);
        out.points.push_back(static_cast<int>(j));
      }
    });

    for (int i = 0; i < frames; ++i) {
      if (per_frame[i].bad_point >= 0) {
        throw NonFiniteError("non-finite input point: frame " + std::to_string(i) + " point " +
                             std::to_string(per_frame[i].bad_point));
      }
    }

    Assembly a;
    for (const auto& f : per_frame) {
      a.depth_rows += static_cast<int>(f.terms.size());
      a.skipped += f.skipped;
    }
    if (a.depth_rows == 0) throw NoOverlapError();

    const auto& smooth_pairs = pairs(map.geometry());
    a.smoothing_rows = static_cast<int>(smooth_pairs.size());
    const int total = a.depth_rows + a.smoothing_rows;
    a.residuals.resize(total);
    a.weights.resize(total);
    a.depth_sources.reserve(a.depth_rows);

    std::vector<Eigen::Triplet<double>> trips;
    if (with_jacobian) trips.reserve(static_cast<std::size_t>(a.depth_rows) * 10 + 2 * smooth_pairs.size());

    CompensatedSum depth_cost;
    int row = 0;
    for (int i = 0; i < frames; ++i) {
      const auto pose_off = layout.pose_offset(i);
      const auto& f = per_frame[i];
      for (std::size_t k = 0; k < f.terms.size(); ++k, ++row) {
        const DepthTerm& t = f.terms[k];
        if (!std::isfinite(t.residual)) {
          throw NonFiniteError("non-finite depth residual: frame " + std::to_string(i) + " point " +
                               std::to_string(f.points[k]));
        }
        a.residuals[row] = t.residual;
        double w = options_.weights.depth;
        double rho = t.residual * t.residual;
        if (options_.huber && std::abs(t.residual) > *options_.huber) {
          const double h = *options_.huber;
          w *= h / std::abs(t.residual);
          rho = 2.0 * h * std::abs(t.residual) - h * h;
        }
        a.weights[row] = w;
        depth_cost += options_.weights.depth * rho;
        a.depth_sources.emplace_back(i, f.points[k]);
        if (!with_jacobian) continue;
        if (pose_off) {
          for (int c = 0; c < 6; ++c) {
            if (t.pose_jacobian[c] != 0.0) trips.emplace_back(row, *pose_off + c, t.pose_jacobian[c]);
          }
        }
        for (int c = 0; c < 4; ++c) {
          if (t.map_jacobian[c] != 0.0) trips.emplace_back(row, layout.cell_offset(t.cells[c]), t.map_jacobian[c]);
        }
      }
    }

    CompensatedSum smooth_cost;
    const auto& v = map.values();
    for (const auto& [ca, cb] : smooth_pairs) {
      const double r = v[ca] - v[cb];
      a.residuals[row] = r;
      a.weights[row] = options_.weights.smooth;
      smooth_cost += options_.weights.smooth * r * r;
      if (with_jacobian) {
        trips.emplace_back(row, layout.cell_offset(ca), 1.0);
        trips.emplace_back(row, layout.cell_offset(cb), -1.0);
      }
      ++row;
    }
    a.depth_cost = depth_cost.value();
    a.smoothing_cost = smooth_cost.value();
    a.cost = a.depth_cost + a.smoothing_cost;
    if (!std::isfinite(a.cost)) throw NonFiniteError("non-finite cost");

    if (with_jacobian) {
      a.jacobian.resize(total, layout.dim());
      a.jacobian.setFromTriplets(trips.begin(), trips.end());
    }
    return a;
  }

 private:
  std::span<const PointCloud> clouds_;
  ProblemOptions options_;
  mutable GridGeometry pattern_geometry_;
  mutable std::vector<std::pair<int, int>> pairs_;
};

/// One-shot assembly with plain least squares and the given weights.
inline Assembly assemble(const ProblemState& state, std::span<const PointCloud> clouds, const Weights& weights,
                         bool with_jacobian = true) {
  ProblemOptions opts;
  opts.weights = weights;
  return Problem(clouds, opts).assemble(state, with_jacobian);
}

}  // namespace depthreg
