#pragma once

#include <stdexcept>
#include <string>

namespace depthreg {

// Base for every error raised by the library. Callers that only need a
// message can catch std::runtime_error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; `offset` is the byte offset (binary/header) or the
// 1-based line number (line-oriented formats), see `unit`.
class ParseError : public IoError {
 public:
  enum class Unit { Byte, Line };

  ParseError(const std::string& path, Unit unit, std::size_t offset, const std::string& what)
      : IoError(path + (unit == Unit::Byte ? ": byte " : ": line ") + std::to_string(offset) + ": " +
                what),
        offset_(offset),
        unit_(unit) {}

  std::size_t offset() const noexcept { return offset_; }
  Unit unit() const noexcept { return unit_; }

 private:
  std::size_t offset_;
  Unit unit_;
};

// No depth residual could be evaluated: every projected point left the map.
class NoOverlapError : public Error {
 public:
  NoOverlapError() : Error("no overlap with map: every depth residual was skipped") {}
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace depthreg
