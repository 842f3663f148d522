#include "ptw/log.hpp"

#include <atomic>
#include <iostream>

namespace ptw {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Warning};
}

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_info(const std::string& msg) {
  if (g_level >= LogLevel::Info) std::clog << "[ptw] " << msg << '\n';
}

void log_warning(const std::string& msg) {
  if (g_level >= LogLevel::Warning) std::clog << "[ptw] warning: " << msg << '\n';
}

}  // namespace ptw
