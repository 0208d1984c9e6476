#pragma once

#include <sstream>
#include <string>

namespace melody {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

// Writes one timestamped line to stderr; serialised across threads.
void log_line(const std::string& line);

template <typename... Args>
void log_info(const Args&... args) {
  if (log_level() < LogLevel::kInfo) return;
  std::ostringstream s;
  (s << ... << args);
  log_line(s.str());
}

template <typename... Args>
void log_debug(const Args&... args) {
  if (log_level() < LogLevel::kDebug) return;
  std::ostringstream s;
  (s << ... << args);
  log_line(s.str());
}

}  // namespace melody
