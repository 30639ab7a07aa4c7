#pragma once

#include <functional>
#include <string_view>

namespace dacal {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

/// Current threshold. Initialized from the DAC_LOG environment variable
/// (error|warn|info|debug), defaulting to warn.
LogLevel log_level();
void set_log_level(LogLevel level);

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Replaces the sink (stderr by default). Passing an empty function restores
/// the default. Returns the previous sink.
LogSink set_log_sink(LogSink sink);

void log(LogLevel level, std::string_view message);
inline void log_warn(std::string_view message) { log(LogLevel::warn, message); }
inline void log_info(std::string_view message) { log(LogLevel::info, message); }
inline void log_debug(std::string_view message) { log(LogLevel::debug, message); }

}  // namespace dacal
