#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <mutex>
#include <sstream>
#include <string>

namespace bhport::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

inline Level& threshold() {
  static Level level = Level::kInfo;
  return level;
}

inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}

// Line-oriented log with timestamp and module tag, written to stderr.
inline void write(Level level, const std::string& module, const std::string& msg) {
  if (level > threshold()) return;
  const char* names[] = {"ERROR", "WARN", "INFO", "DEBUG"};
  auto now = std::chrono::system_clock::now();
  std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm);
  std::lock_guard<std::mutex> lock(mutex());
  std::fprintf(stderr, "%s %-5s [%s] %s\n", stamp,
               names[static_cast<int>(level)], module.c_str(), msg.c_str());
}

inline void error(const std::string& module, const std::string& msg) {
  write(Level::kError, module, msg);
}
inline void warn(const std::string& module, const std::string& msg) {
  write(Level::kWarn, module, msg);
}
inline void info(const std::string& module, const std::string& msg) {
  write(Level::kInfo, module, msg);
}
inline void debug(const std::string& module, const std::string& msg) {
  write(Level::kDebug, module, msg);
}

}  // namespace bhport::log
