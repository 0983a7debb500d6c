#pragma once

#include <cstdlib>
#include <string>

#include <spdlog/spdlog.h>

namespace depthreg {

// Applies the DEPTHREG_LOG environment variable (trace, debug, info, warn,
// error, off) to the default logger. Unset means "warn".
inline void configure_logging_from_env() {
  const char* env = std::getenv("DEPTHREG_LOG");
  const std::string level = env ? env : "warn";
  spdlog::set_level(spdlog::level::from_str(level));
  spdlog::set_pattern("[%l] %v");
}

}  // namespace depthreg
