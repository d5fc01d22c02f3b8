#include "netsar/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace netsar {

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("NETSAR_LOG");
        if (!env) return LogLevel::error;
        const std::string v(env);
        if (v == "debug") return LogLevel::debug;
        if (v == "info") return LogLevel::info;
        return LogLevel::error;
    }();
    return level;
}

void log_message(LogLevel level, const std::string& msg) {
    if (int(level) > int(log_level())) return;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    const char* tag = level == LogLevel::error ? "error" : level == LogLevel::info ? "info" : "debug";
    std::cerr << "[netsar:" << tag << "] " << msg << "\n";
}

}  // namespace netsar
