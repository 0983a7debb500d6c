#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "depthreg/error.hpp"
#include "depthreg/geometry.hpp"
#include "depthreg/point_cloud.hpp"
#include "depthreg/synth.hpp"

namespace depthreg::io {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

enum class CloudFormat { Auto, PlyAscii, PlyBinaryLE, XyzText };

struct CloudReadResult {
  PointCloud cloud;
  std::size_t dropped = 0;  // rows with a non-finite coordinate
};

namespace detail {

enum class ScalarType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline std::optional<ScalarType> scalar_type(std::string_view name) {
  static const std::map<std::string_view, ScalarType> kTypes{
      {"char", ScalarType::Int8},     {"int8", ScalarType::Int8},       {"uchar", ScalarType::UInt8},
      {"uint8", ScalarType::UInt8},   {"short", ScalarType::Int16},     {"int16", ScalarType::Int16},
      {"ushort", ScalarType::UInt16}, {"uint16", ScalarType::UInt16},   {"int", ScalarType::Int32},
      {"int32", ScalarType::Int32},   {"uint", ScalarType::UInt32},     {"uint32", ScalarType::UInt32},
      {"float", ScalarType::Float32}, {"float32", ScalarType::Float32}, {"double", ScalarType::Float64},
      {"float64", ScalarType::Float64}};
  const auto it = kTypes.find(name);
  if (it == kTypes.end()) return std::nullopt;
  return it->second;
}

inline std::size_t scalar_size(ScalarType t) {
  switch (t) {
    case ScalarType::Int8:
    case ScalarType::UInt8: return 1;
    case ScalarType::Int16:
    case ScalarType::UInt16: return 2;
    case ScalarType::Int32:
    case ScalarType::UInt32:
    case ScalarType::Float32: return 4;
    case ScalarType::Float64: return 8;
  }
  return 0;
}

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline double load_scalar(ScalarType t, const char* p) {
  switch (t) {
    case ScalarType::Int8: return load<std::int8_t>(p);
    case ScalarType::UInt8: return load<std::uint8_t>(p);
    case ScalarType::Int16: return load<std::int16_t>(p);
    case ScalarType::UInt16: return load<std::uint16_t>(p);
    case ScalarType::Int32: return load<std::int32_t>(p);
    case ScalarType::UInt32: return load<std::uint32_t>(p);
    case ScalarType::Float32: return load<float>(p);
    case ScalarType::Float64: return load<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  ScalarType type = ScalarType::Float32;
  bool is_list = false;
  ScalarType count_type = ScalarType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyHeader {
  bool binary = false;
  std::vector<PlyElement> elements;
  std::size_t body_offset = 0;
};

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  return {std::istream_iterator<std::string>(ss), std::istream_iterator<std::string>()};
}

inline PlyHeader parse_ply_header(const std::string& data, const std::string& path) {
  PlyHeader h;
  std::size_t pos = 0;
  bool saw_format = false;
  bool first = true;
  while (true) {
    const std::size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) throw ParseError(path, ParseError::Unit::Byte, pos, "unterminated PLY header");
    std::string line = data.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t line_start = pos;
    pos = eol + 1;
    const auto tok = split_ws(line);
    if (first) {
      if (tok.size() != 1 || tok[0] != "ply") throw ParseError(path, ParseError::Unit::Byte, 0, "missing 'ply' magic");
      first = false;
      continue;
    }
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() != 3) throw ParseError(path, ParseError::Unit::Byte, line_start, "malformed format line");
      if (tok[1] == "ascii") {
        h.binary = false;
      } else if (tok[1] == "binary_little_endian") {
        h.binary = true;
      } else {
        throw ParseError(path, ParseError::Unit::Byte, line_start, "unsupported PLY format '" + tok[1] + "'");
      }
      saw_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError(path, ParseError::Unit::Byte, line_start, "malformed element line");
      PlyElement e;
      e.name = tok[1];
      try {
        std::size_t used = 0;
        const long long n = std::stoll(tok[2], &used);
        if (used != tok[2].size() || n < 0) throw std::invalid_argument("count");
        e.count = static_cast<std::size_t>(n);
      } catch (const std::exception&) {
        throw ParseError(path, ParseError::Unit::Byte, line_start, "bad element count '" + tok[2] + "'");
      }
      h.elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (h.elements.empty()) throw ParseError(path, ParseError::Unit::Byte, line_start, "property before element");
      PlyProperty p;
      if (tok.size() == 5 && tok[1] == "list") {
        const auto ct = scalar_type(tok[2]);
        const auto it = scalar_type(tok[3]);
        if (!ct || !it) throw ParseError(path, ParseError::Unit::Byte, line_start, "unsupported property type");
        p.is_list = true;
        p.count_type = *ct;
        p.type = *it;
        p.name = tok[4];
      } else if (tok.size() == 3) {
        const auto t = scalar_type(tok[1]);
        if (!t) throw ParseError(path, ParseError::Unit::Byte, line_start, "unsupported property type '" + tok[1] + "'");
        p.type = *t;
        p.name = tok[2];
      } else {
        throw ParseError(path, ParseError::Unit::Byte, line_start, "malformed property line");
      }
      h.elements.back().properties.push_back(std::move(p));
    } else {
      throw ParseError(path, ParseError::Unit::Byte, line_start, "unknown header keyword '" + tok[0] + "'");
    }
  }
  if (!saw_format) throw ParseError(path, ParseError::Unit::Byte, 0, "missing format line");
  h.body_offset = pos;
  return h;
}

struct XyzColumns {
  int x = -1, y = -1, z = -1;
};

inline XyzColumns find_xyz(const PlyElement& e, const std::string& path, std::size_t offset) {
  XyzColumns c;
  for (int i = 0; i < static_cast<int>(e.properties.size()); ++i) {
    const auto& p = e.properties[i];
    if (p.is_list) continue;
    if (p.name == "x") c.x = i;
    if (p.name == "y") c.y = i;
    if (p.name == "z") c.z = i;
  }
  if (c.x < 0 || c.y < 0 || c.z < 0) throw ParseError(path, ParseError::Unit::Byte, offset, "vertex element lacks x/y/z");
  return c;
}

inline void keep_point(CloudReadResult& out, const Vec3& p) {
  if (p.allFinite()) {
    out.cloud.points.push_back(p);
  } else {
    ++out.dropped;
  }
}

inline void read_ply_binary(const std::string& data, const PlyHeader& h, const std::string& path, CloudReadResult& out) {
  std::size_t pos = h.body_offset;
  auto need = [&](std::size_t bytes) {
    if (data.size() - pos < bytes) {
      throw ParseError(path, ParseError::Unit::Byte, pos, "truncated binary body (element count mismatch)");
    }
  };
  for (const auto& e : h.elements) {
    const bool vertex = e.name == "vertex";
    XyzColumns cols;
    if (vertex) cols = find_xyz(e, path, h.body_offset);
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 p = Vec3::Zero();
      for (int k = 0; k < static_cast<int>(e.properties.size()); ++k) {
        const auto& prop = e.properties[k];
        if (prop.is_list) {
          need(scalar_size(prop.count_type));
          const double n = load_scalar(prop.count_type, data.data() + pos);
          pos += scalar_size(prop.count_type);
          if (n < 0) throw ParseError(path, ParseError::Unit::Byte, pos, "negative list length");
          const std::size_t bytes = static_cast<std::size_t>(n) * scalar_size(prop.type);
          need(bytes);
          pos += bytes;
          continue;
        }
        need(scalar_size(prop.type));
        const double v = load_scalar(prop.type, data.data() + pos);
        pos += scalar_size(prop.type);
        if (vertex) {
          if (k == cols.x) p.x() = v;
          if (k == cols.y) p.y() = v;
          if (k == cols.z) p.z() = v;
        }
      }
      if (vertex) keep_point(out, p);
    }
  }
  if (pos != data.size()) {
    throw ParseError(path, ParseError::Unit::Byte, pos, "trailing bytes after last element (element count mismatch)");
  }
}

inline double parse_number(const std::string& tok, const std::string& path, std::size_t offset) {
  if (tok == "nan" || tok == "NaN" || tok == "-nan") return std::nan("");
  if (tok == "inf" || tok == "Inf") return std::numeric_limits<double>::infinity();
  if (tok == "-inf" || tok == "-Inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::out_of_range&) {
    return tok[0] == '-' ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  } catch (const std::exception&) {
    throw ParseError(path, ParseError::Unit::Byte, offset, "bad number '" + tok + "'");
  }
}

inline void read_ply_ascii(const std::string& data, const PlyHeader& h, const std::string& path, CloudReadResult& out) {
  std::size_t pos = h.body_offset;
  auto next_line = [&](std::string& line, std::size_t& start) {
    while (pos < data.size()) {
      start = pos;
      std::size_t eol = data.find('\n', pos);
      if (eol == std::string::npos) eol = data.size();
      line = data.substr(pos, eol - pos);
      pos = eol + 1;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    start = data.size();
    return false;
  };
  std::string line;
  std::size_t start = 0;
  for (const auto& e : h.elements) {
    const bool vertex = e.name == "vertex";
    XyzColumns cols;
    if (vertex) cols = find_xyz(e, path, h.body_offset);
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!next_line(line, start)) {
        throw ParseError(path, ParseError::Unit::Byte, start,
                         "element '" + e.name + "' declares " + std::to_string(e.count) + " rows, found " +
                             std::to_string(i));
      }
      const auto tok = split_ws(line);
      std::size_t t = 0;
      Vec3 p = Vec3::Zero();
      for (int k = 0; k < static_cast<int>(e.properties.size()); ++k) {
        const auto& prop = e.properties[k];
        if (t >= tok.size()) throw ParseError(path, ParseError::Unit::Byte, start, "too few values on row");
        if (prop.is_list) {
          const double n = parse_number(tok[t++], path, start);
          if (n < 0 || t + static_cast<std::size_t>(n) > tok.size()) {
            throw ParseError(path, ParseError::Unit::Byte, start, "bad list length");
          }
          t += static_cast<std::size_t>(n);
          continue;
        }
        const double v = parse_number(tok[t++], path, start);
        if (vertex) {
          if (k == cols.x) p.x() = v;
          if (k == cols.y) p.y() = v;
          if (k == cols.z) p.z() = v;
        }
      }
      if (t != tok.size()) throw ParseError(path, ParseError::Unit::Byte, start, "too many values on row");
      if (vertex) keep_point(out, p);
    }
  }
  if (next_line(line, start)) {
    throw ParseError(path, ParseError::Unit::Byte, start, "data after last element (element count mismatch)");
  }
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

inline void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

// Prints with round-trip precision; never prints "-0".
inline void put(std::ostream& out, double v) { out << (v == 0.0 ? 0.0 : v); }

}  // namespace detail

inline CloudFormat format_from_extension(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  return ext == ".ply" ? CloudFormat::Auto : CloudFormat::XyzText;
}

/// Reads x, y, z of every vertex; other properties and elements are skipped.
/// The frame id is the file stem.
inline CloudReadResult read_cloud(const std::string& path, CloudFormat format = CloudFormat::Auto) {
  CloudReadResult out;
  out.cloud.frame_id = std::filesystem::path(path).stem().string();
  if (format == CloudFormat::Auto) format = format_from_extension(path);
  const std::string data = detail::slurp(path);

  if (format == CloudFormat::XyzText) {
    std::istringstream in(data);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto tok = detail::split_ws(line);
      if (tok.size() < 3) throw ParseError(path, ParseError::Unit::Line, line_no, "expected at least 3 values");
      Vec3 p;
      for (int k = 0; k < 3; ++k) {
        try {
          p[k] = detail::parse_number(tok[k], path, line_no);
        } catch (const ParseError&) {
          throw ParseError(path, ParseError::Unit::Line, line_no, "bad number '" + tok[k] + "'");
        }
      }
      detail::keep_point(out, p);
    }
    return out;
  }

  const auto header = detail::parse_ply_header(data, path);
  if ((format == CloudFormat::PlyAscii && header.binary) || (format == CloudFormat::PlyBinaryLE && !header.binary)) {
    throw ParseError(path, ParseError::Unit::Byte, 0, "PLY format does not match the requested format");
  }
  if (header.binary) {
    detail::read_ply_binary(data, header, path, out);
  } else {
    detail::read_ply_ascii(data, header, path, out);
  }
  return out;
}

/// Writes x, y, z as doubles (PLY) or a 3-column text file (XYZ).
inline void write_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format) {
  if (format == CloudFormat::Auto) {
    format = format_from_extension(path) == CloudFormat::XyzText ? CloudFormat::XyzText : CloudFormat::PlyBinaryLE;
  }
  if (format == CloudFormat::XyzText) {
    auto out = detail::open_out(path);
    out << std::setprecision(17);
    for (const auto& p : cloud.points) {
      detail::put(out, p.x());
      out << ' ';
      detail::put(out, p.y());
      out << ' ';
      detail::put(out, p.z());
      out << '\n';
    }
    detail::finish(out, path);
    return;
  }
  const bool binary = format == CloudFormat::PlyBinaryLE;
  auto out = detail::open_out(path, true);
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  if (!cloud.frame_id.empty()) out << "comment frame " << cloud.frame_id << "\n";
  out << "element vertex " << cloud.points.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\nend_header\n";
  if (binary) {
    for (const auto& p : cloud.points) {
      const double xyz[3] = {p.x(), p.y(), p.z()};
      out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    }
  } else {
    out << std::setprecision(17);
    for (const auto& p : cloud.points) {
      detail::put(out, p.x());
      out << ' ';
      detail::put(out, p.y());
      out << ' ';
      detail::put(out, p.z());
      out << '\n';
    }
  }
  detail::finish(out, path);
}

/// All frames projected into the world frame, concatenated in frame order.
inline PointCloud merge_clouds(std::span<const PointCloud> clouds, std::span<const Pose> poses) {
  if (clouds.size() != poses.size()) throw InvalidArgument("merge_clouds: cloud/pose count mismatch");
  PointCloud merged;
  merged.frame_id = "merged";
  std::size_t total = 0;
  for (const auto& c : clouds) total += c.size();
  merged.points.reserve(total);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const Mat3 r = poses[i].rotation();
    for (const auto& p : clouds[i].points) merged.points.push_back(r * p + poses[i].t);
  }
  return merged;
}

// ---- trajectories -------------------------------------------------------------

struct TrajectoryRecord {
  std::string frame_id;
  Pose pose;
};

/// One line per frame: `frame_id tx ty tz qx qy qz qw`.
inline void write_trajectory(std::span<const TrajectoryRecord> records, const std::string& path) {
  auto out = detail::open_out(path);
  out << std::setprecision(17);
  for (const auto& r : records) {
    const Eigen::Quaterniond q = quaternion_from_euler(r.pose.theta);
    out << r.frame_id;
    for (double v : {r.pose.t.x(), r.pose.t.y(), r.pose.t.z(), q.x(), q.y(), q.z(), q.w()}) {
      out << ' ';
      detail::put(out, v);
    }
    out << '\n';
  }
  detail::finish(out, path);
}

/// Blank lines and lines starting with '#' are ignored. `scale` multiplies translations.
inline std::vector<TrajectoryRecord> read_trajectory(const std::string& path, double scale = 1.0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<TrajectoryRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto tok = detail::split_ws(line);
    if (tok.size() != 8) {
      throw ParseError(path, ParseError::Unit::Line, line_no,
                       "expected 8 fields (frame_id tx ty tz qx qy qz qw), got " + std::to_string(tok.size()));
    }
    double v[7];
    for (int k = 0; k < 7; ++k) {
      try {
        std::size_t used = 0;
        v[k] = std::stod(tok[k + 1], &used);
        if (used != tok[k + 1].size() || !std::isfinite(v[k])) throw std::invalid_argument(tok[k + 1]);
      } catch (const std::exception&) {
        throw ParseError(path, ParseError::Unit::Line, line_no, "bad number '" + tok[k + 1] + "'");
      }
    }
    const Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
    if (!(q.norm() > 1e-12)) throw ParseError(path, ParseError::Unit::Line, line_no, "zero quaternion");
    TrajectoryRecord r;
    r.frame_id = tok[0];
    r.pose.t = Vec3(v[0], v[1], v[2]) * scale;
    r.pose.theta = euler_from_quaternion(q);
    records.push_back(std::move(r));
  }
  return records;
}

// ---- key-value configuration ------------------------------------------------------

/// Flat `key = value` text; '#' starts a comment; keys may repeat.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source) {
    KeyValueConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(source, ParseError::Unit::Line, line_no, "expected key = value");
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ParseError(source, ParseError::Unit::Line, line_no, "empty key");
      cfg.entries_.push_back({key, trim(line.substr(eq + 1)), line_no});
    }
    cfg.source_ = source;
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    return parse(in, path);
  }

  std::optional<std::string> get(const std::string& key) const {
    std::optional<std::string> found;
    for (const auto& e : entries_) {
      if (e.key == key) found = e.value;
    }
    return found;
  }

  std::vector<std::string> get_all(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      if (e.key == key) out.push_back(e.value);
    }
    return out;
  }

  /// Comma/whitespace separated numbers; `expected` of 0 accepts any count.
  std::vector<double> numbers(const std::string& key, const std::string& value, std::size_t expected = 0) const {
    std::string s = value;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::vector<double> out;
    for (const auto& tok : detail::split_ws(s)) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(source_, ParseError::Unit::Line, line_of(key), "bad number '" + tok + "' for " + key);
      }
    }
    if (expected && out.size() != expected) {
      throw ParseError(source_, ParseError::Unit::Line, line_of(key),
                       key + " expects " + std::to_string(expected) + " values");
    }
    return out;
  }

  void require_known(std::span<const std::string_view> known) const {
    for (const auto& e : entries_) {
      if (std::find(known.begin(), known.end(), e.key) == known.end()) {
        throw ParseError(source_, ParseError::Unit::Line, e.line, "unknown key '" + e.key + "'");
      }
    }
  }

 private:
  struct Entry {
    std::string key;
    std::string value;
    std::size_t line;
  };

  std::size_t line_of(const std::string& key) const {
    for (const auto& e : entries_) {
      if (e.key == key) return e.line;
    }
    return 0;
  }

  std::vector<Entry> entries_;
  std::string source_;
};

// Scene spec keys: surface (plane|bumps|terrace), slope (a,b), base (c),
// bump (cx,cy,sigma,amplitude; repeatable), terrace_heights, terrace_width,
// extent, frames, grid_cols, footprint, points_per_frame, noise_sigma,
// perturb_translation, perturb_rotation (rad), camera_height,
// attitude_range, yaw_range, seed.
inline synth::SceneSpec scene_spec_from_config(const KeyValueConfig& cfg) {
  static constexpr std::string_view kKeys[] = {
      "surface", "slope", "base", "bump", "terrace_heights", "terrace_width", "extent", "frames",
      "grid_cols", "footprint", "points_per_frame", "noise_sigma", "perturb_translation", "perturb_rotation",
      "camera_height", "attitude_range", "yaw_range", "seed"};
  cfg.require_known(kKeys);

  synth::SceneSpec spec;
  auto scalar = [&](const char* key, double& target) {
    if (auto v = cfg.get(key)) target = cfg.numbers(key, *v, 1)[0];
  };
  auto integer = [&](const char* key, auto& target) {
    if (auto v = cfg.get(key)) {
      const double d = cfg.numbers(key, *v, 1)[0];
      if (d != std::floor(d) || d < 0) throw InvalidArgument(std::string("scene: ") + key + " must be a non-negative integer");
      target = static_cast<std::remove_reference_t<decltype(target)>>(d);
    }
  };
  auto pair = [&](const char* key, Vec2& target) {
    if (auto v = cfg.get(key)) {
      const auto n = cfg.numbers(key, *v, 2);
      target = {n[0], n[1]};
    }
  };

  if (auto kind = cfg.get("surface")) {
    if (*kind == "plane") {
      spec.surface.kind = synth::Surface::Kind::Plane;
    } else if (*kind == "bumps") {
      spec.surface.kind = synth::Surface::Kind::GaussianBumps;
    } else if (*kind == "terrace") {
      spec.surface.kind = synth::Surface::Kind::StepTerrace;
    } else {
      throw InvalidArgument("scene: unknown surface '" + *kind + "'");
    }
  }
  if (auto v = cfg.get("slope")) {
    const auto n = cfg.numbers("slope", *v, 2);
    spec.surface.a = n[0];
    spec.surface.b = n[1];
  }
  scalar("base", spec.surface.c);
  for (const auto& b : cfg.get_all("bump")) {
    const auto n = cfg.numbers("bump", b, 4);
    spec.surface.bumps.push_back({{n[0], n[1]}, n[2], n[3]});
  }
  if (auto v = cfg.get("terrace_heights")) spec.surface.terrace_heights = cfg.numbers("terrace_heights", *v);
  scalar("terrace_width", spec.surface.terrace_width);
  pair("extent", spec.extent);
  integer("frames", spec.frames);
  integer("grid_cols", spec.grid_cols);
  pair("footprint", spec.footprint);
  integer("points_per_frame", spec.points_per_frame);
  scalar("noise_sigma", spec.noise_sigma);
  scalar("perturb_translation", spec.perturb_translation);
  scalar("perturb_rotation", spec.perturb_rotation);
  scalar("camera_height", spec.camera_height);
  scalar("attitude_range", spec.attitude_range);
  scalar("yaw_range", spec.yaw_range);
  integer("seed", spec.seed);
  spec.validate();
  return spec;
}

inline synth::SceneSpec read_scene_spec(const std::string& path) {
  return scene_spec_from_config(KeyValueConfig::load(path));
}

inline void write_scene_spec(const synth::SceneSpec& spec, const std::string& path) {
  auto out = detail::open_out(path);
  out << std::setprecision(17);
  out << "surface = " << synth::to_string(spec.surface.kind) << "\n";
  out << "slope = " << spec.surface.a << ", " << spec.surface.b << "\n";
  out << "base = " << spec.surface.c << "\n";
  for (const auto& b : spec.surface.bumps) {
    out << "bump = " << b.centre.x() << ", " << b.centre.y() << ", " << b.sigma << ", " << b.amplitude << "\n";
  }
  if (!spec.surface.terrace_heights.empty()) {
    out << "terrace_heights = ";
    for (std::size_t i = 0; i < spec.surface.terrace_heights.size(); ++i) {
      out << (i ? ", " : "") << spec.surface.terrace_heights[i];
    }
    out << "\n";
  }
  out << "terrace_width = " << spec.surface.terrace_width << "\n";
  out << "extent = " << spec.extent.x() << ", " << spec.extent.y() << "\n";
  out << "frames = " << spec.frames << "\n";
  out << "grid_cols = " << spec.grid_cols << "\n";
  out << "footprint = " << spec.footprint.x() << ", " << spec.footprint.y() << "\n";
  out << "points_per_frame = " << spec.points_per_frame << "\n";
  out << "noise_sigma = " << spec.noise_sigma << "\n";
  out << "perturb_translation = " << spec.perturb_translation << "\n";
  out << "perturb_rotation = " << spec.perturb_rotation << "\n";
  out << "camera_height = " << spec.camera_height << "\n";
  out << "attitude_range = " << spec.attitude_range << "\n";
  out << "yaw_range = " << spec.yaw_range << "\n";
  out << "seed = " << spec.seed << "\n";
  detail::finish(out, path);
}

}  // namespace depthreg::io
