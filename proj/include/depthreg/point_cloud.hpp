#pragma once

#include <string>
#include <vector>

#include "depthreg/geometry.hpp"

namespace depthreg {

/// One frame's points in its local coordinate system, metres.
struct PointCloud {
  std::string frame_id;
  std::vector<Vec3> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

}  // namespace depthreg
