#pragma once

#include <string>

namespace netsar {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Level comes from the NETSAR_LOG environment variable (error|info|debug),
/// default error. Messages go to stderr.
LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

inline void log_error(const std::string& msg) { log_message(LogLevel::error, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::debug, msg); }

}  // namespace netsar
