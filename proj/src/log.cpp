#include "diffunet/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace diffunet {

namespace {
std::mutex log_mutex;
std::atomic<LogLevel> current_level{LogLevel::kInfo};
}  // namespace

void set_log_level(LogLevel level) { current_level = level; }
LogLevel log_level() { return current_level; }

void log_message(LogLevel level, const std::string& message) {
  if (level < current_level.load()) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::lock_guard<std::mutex> lock(log_mutex);
  std::clog << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace diffunet
