#include "xtalgen/core/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace xtalgen {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Warning};
std::mutex g_mutex;
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_warning(const std::string& message) {
  if (g_level < LogLevel::Warning) return;
  std::lock_guard lock(g_mutex);
  std::clog << "[warning] " << message << '\n';
}

void log_info(const std::string& message) {
  if (g_level < LogLevel::Info) return;
  std::lock_guard lock(g_mutex);
  std::clog << "[info] " << message << '\n';
}

}  // namespace xtalgen
