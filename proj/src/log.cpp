#include "dacal/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace dacal {
namespace {

LogLevel level_from_env() {
  const char* env = std::getenv("DAC_LOG");
  if (env == nullptr) return LogLevel::warn;
  const std::string v(env);
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

std::atomic<int>& level_storage() {
  static std::atomic<int> level{static_cast<int>(level_from_env())};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& sink_storage() {
  static LogSink sink;
  return sink;
}

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::error: return "error";
    case LogLevel::warn: return "warn";
    case LogLevel::info: return "info";
    case LogLevel::debug: return "debug";
  }
  return "?";
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_storage().load()); }

void set_log_level(LogLevel level) { level_storage().store(static_cast<int>(level)); }

LogSink set_log_sink(LogSink sink) {
  std::lock_guard lock(sink_mutex());
  LogSink previous = std::move(sink_storage());
  sink_storage() = std::move(sink);
  return previous;
}

void log(LogLevel level, std::string_view message) {
  std::lock_guard lock(sink_mutex());
  // Custom sinks see every message; the threshold only gates stderr.
  if (sink_storage()) {
    sink_storage()(level, message);
    return;
  }
  if (static_cast<int>(level) > level_storage().load()) return;
  std::cerr << "[dacal " << level_name(level) << "] " << message << '\n';
}

}  // namespace dacal
