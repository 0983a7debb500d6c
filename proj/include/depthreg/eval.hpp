#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "depthreg/error.hpp"
#include "depthreg/geometry.hpp"
#include "depthreg/io.hpp"

namespace depthreg::eval {

using io::TrajectoryRecord;

/// Moves every estimated pose by the rigid transform that takes the anchor
/// frame's estimate onto its ground truth.
inline std::vector<TrajectoryRecord> align_gauge(std::span<const TrajectoryRecord> estimated,
                                                 std::span<const TrajectoryRecord> ground_truth, int anchor = 0) {
  if (estimated.size() != ground_truth.size() || estimated.empty()) {
    throw InvalidArgument("align_gauge: frame count mismatch");
  }
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    if (estimated[i].frame_id != ground_truth[i].frame_id) {
      throw InvalidArgument("align_gauge: frame id mismatch at index " + std::to_string(i) + ": '" +
                            estimated[i].frame_id + "' vs '" + ground_truth[i].frame_id + "'");
    }
  }
  if (anchor < 0 || anchor >= static_cast<int>(estimated.size())) throw InvalidArgument("align_gauge: bad anchor");

  const Mat3 r_gt = ground_truth[anchor].pose.rotation();
  const Mat3 r_est = estimated[anchor].pose.rotation();
  const Mat3 r_align = r_gt * r_est.transpose();
  const Vec3 t_align = ground_truth[anchor].pose.t - r_align * estimated[anchor].pose.t;

  std::vector<TrajectoryRecord> out(estimated.begin(), estimated.end());
  for (auto& rec : out) {
    rec.pose = pose_from_rotation(r_align * rec.pose.rotation(), r_align * rec.pose.t + t_align);
  }
  return out;
}

struct FrameError {
  std::string frame_id;
  double translation = 0.0;  // metres
  double rotation = 0.0;     // radians, geodesic
};

struct PoseErrorSummary {
  double mae_trans = 0.0;
  double rmse_trans = 0.0;
  double mae_rot = 0.0;
  double rmse_rot = 0.0;
  std::vector<FrameError> frames;
};

/// Per-frame translation distance and geodesic rotation angle, then MAE/RMSE.
inline PoseErrorSummary pose_errors(std::span<const TrajectoryRecord> estimated,
                                    std::span<const TrajectoryRecord> ground_truth) {
  if (estimated.size() != ground_truth.size()) throw InvalidArgument("pose_errors: frame count mismatch");
  PoseErrorSummary s;
  if (estimated.empty()) return s;
  CompensatedSum t_abs, t_sq, r_abs, r_sq;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    FrameError e;
    e.frame_id = estimated[i].frame_id;
    e.translation = (estimated[i].pose.t - ground_truth[i].pose.t).norm();
    e.rotation = rotation_angle_between(estimated[i].pose.rotation(), ground_truth[i].pose.rotation());
    t_abs += e.translation;
    t_sq += e.translation * e.translation;
    r_abs += e.rotation;
    r_sq += e.rotation * e.rotation;
    s.frames.push_back(std::move(e));
  }
  const double n = static_cast<double>(estimated.size());
  s.mae_trans = t_abs.value() / n;
  s.rmse_trans = std::sqrt(t_sq.value() / n);
  s.mae_rot = r_abs.value() / n;
  s.rmse_rot = std::sqrt(r_sq.value() / n);
  return s;
}

inline std::string to_table(const PoseErrorSummary& s) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(18) << "Metric" << "Value\n";
  out << std::setw(18) << "MAE(Trans/m)" << s.mae_trans << "\n";
  out << std::setw(18) << "RMSE(Trans/m)" << s.rmse_trans << "\n";
  out << std::setw(18) << "MAE(Rot/rad)" << s.mae_rot << "\n";
  out << std::setw(18) << "RMSE(Rot/rad)" << s.rmse_rot << "\n";
  out << "\n" << std::setw(18) << "Frame" << std::setw(14) << "Trans/m" << "Rot/rad\n";
  for (const auto& f : s.frames) {
    out << std::setw(18) << f.frame_id << std::setw(14) << f.translation << f.rotation << "\n";
  }
  return out.str();
}

inline nlohmann::json to_json(const PoseErrorSummary& s) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : s.frames) {
    frames.push_back({{"frame_id", f.frame_id}, {"translation", f.translation}, {"rotation", f.rotation}});
  }
  return {{"mae_trans", s.mae_trans}, {"rmse_trans", s.rmse_trans}, {"mae_rot", s.mae_rot},
          {"rmse_rot", s.rmse_rot},   {"frames", frames}};
}

// ---- markers ------------------------------------------------------------------

/// A marker seen in one frame, in that frame's local coordinates.
struct MarkerObservation {
  std::string marker_id;
  std::string frame_id;
  Vec3 local = Vec3::Zero();
};

/// Surveyed separation of two markers along each world axis, metres (absolute values).
struct MarkerReference {
  std::string a;
  std::string b;
  Vec3 axis_distance = Vec3::Zero();
};

struct MarkerPairError {
  std::string a;
  std::string b;
  Vec3 estimated = Vec3::Zero();  // |position(b) - position(a)| per axis
  Vec3 axis_error = Vec3::Zero();
  double distance_error = 0.0;  // difference of Euclidean separations
};

/// World marker positions (mean over all observations of each marker).
inline std::map<std::string, Vec3> marker_positions(std::span<const MarkerObservation> observations,
                                                    std::span<const TrajectoryRecord> trajectory) {
  std::map<std::string, const Pose*> poses;
  for (const auto& r : trajectory) poses[r.frame_id] = &r.pose;
  std::map<std::string, std::pair<Vec3, int>> acc;
  for (const auto& o : observations) {
    const auto it = poses.find(o.frame_id);
    if (it == poses.end()) {
      throw InvalidArgument("marker '" + o.marker_id + "' observed in unknown frame '" + o.frame_id + "'");
    }
    auto& [sum, count] = acc.try_emplace(o.marker_id, Vec3::Zero(), 0).first->second;
    sum += transform_point(*it->second, o.local);
    ++count;
  }
  std::map<std::string, Vec3> out;
  for (const auto& [id, sc] : acc) out[id] = sc.first / sc.second;
  return out;
}

inline std::vector<MarkerPairError> marker_distance_errors(std::span<const MarkerObservation> observations,
                                                           std::span<const TrajectoryRecord> trajectory,
                                                           std::span<const MarkerReference> references) {
  const auto positions = marker_positions(observations, trajectory);
  std::vector<MarkerPairError> out;
  for (const auto& ref : references) {
    const auto pa = positions.find(ref.a);
    const auto pb = positions.find(ref.b);
    if (pa == positions.end()) throw InvalidArgument("missing marker annotation: " + ref.a);
    if (pb == positions.end()) throw InvalidArgument("missing marker annotation: " + ref.b);
    MarkerPairError e;
    e.a = ref.a;
    e.b = ref.b;
    e.estimated = (pb->second - pa->second).cwiseAbs();
    e.axis_error = (e.estimated - ref.axis_distance).cwiseAbs();
    e.distance_error = std::abs(e.estimated.norm() - ref.axis_distance.norm());
    out.push_back(std::move(e));
  }
  return out;
}

inline std::string to_table(std::span<const MarkerPairError> errors) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << std::left;
  out << std::setw(20) << "Pair" << std::setw(10) << "X (m)" << std::setw(10) << "Y (m)" << std::setw(10) << "Z (m)"
      << "Dist (m)\n";
  for (const auto& e : errors) {
    out << std::setw(20) << (e.a + "-" + e.b) << std::setw(10) << e.axis_error.x() << std::setw(10)
        << e.axis_error.y() << std::setw(10) << e.axis_error.z() << e.distance_error << "\n";
  }
  return out.str();
}

inline nlohmann::json to_json(std::span<const MarkerPairError> errors) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : errors) {
    arr.push_back({{"a", e.a},
                   {"b", e.b},
                   {"x", e.axis_error.x()},
                   {"y", e.axis_error.y()},
                   {"z", e.axis_error.z()},
                   {"distance", e.distance_error}});
  }
  return {{"marker_pairs", arr}};
}

namespace detail {

template <typename Row>
std::vector<Row> read_rows(const std::string& path, std::size_t fields, const char* layout,
                           Row (*make)(const std::vector<std::string>&, const std::vector<double>&)) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto tok = io::detail::split_ws(line);
    if (tok.size() != fields) throw ParseError(path, ParseError::Unit::Line, line_no, std::string("expected ") + layout);
    std::vector<double> nums;
    for (std::size_t k = fields - 3; k < fields; ++k) {
      try {
        nums.push_back(std::stod(tok[k]));
      } catch (const std::exception&) {
        throw ParseError(path, ParseError::Unit::Line, line_no, "bad number '" + tok[k] + "'");
      }
    }
    rows.push_back(make(tok, nums));
  }
  return rows;
}

}  // namespace detail

/// Lines of `marker_id frame_id x y z`.
inline std::vector<MarkerObservation> read_marker_observations(const std::string& path) {
  return detail::read_rows<MarkerObservation>(
      path, 5, "marker_id frame_id x y z", [](const std::vector<std::string>& t, const std::vector<double>& v) {
        return MarkerObservation{t[0], t[1], Vec3(v[0], v[1], v[2])};
      });
}

/// Lines of `marker_a marker_b dx dy dz`.
inline std::vector<MarkerReference> read_marker_references(const std::string& path) {
  return detail::read_rows<MarkerReference>(
      path, 5, "marker_a marker_b dx dy dz", [](const std::vector<std::string>& t, const std::vector<double>& v) {
        return MarkerReference{t[0], t[1], Vec3(v[0], v[1], v[2]).cwiseAbs()};
      });
}

}  // namespace depthreg::eval
