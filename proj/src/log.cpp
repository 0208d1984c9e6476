#include <atomic>
#include <chrono>
#include <cstdio>
#include <mutex>

#include "melody/log.hpp"

namespace melody {

namespace {

std::atomic<int> g_level{static_cast<int>(LogLevel::kInfo)};
std::mutex g_mutex;
const auto g_start = std::chrono::steady_clock::now();

}  // namespace

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }

LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_line(const std::string& line) {
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - g_start).count();
  std::lock_guard lock(g_mutex);
  std::fprintf(stderr, "[%9.2fs] %s\n", elapsed, line.c_str());
}

}  // namespace melody
