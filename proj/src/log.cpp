#include "factpipe/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace factpipe {

namespace {

std::atomic<LogLevel> g_level{LogLevel::Warn};
std::mutex g_mu;

void emit(LogLevel level, const char* tag, std::string_view message) {
    if (level < g_level.load()) {
        return;
    }
    std::lock_guard lock(g_mu);
    std::cerr << "[factpipe] " << tag << ": " << message << '\n';
}

} // namespace

void set_log_level(LogLevel level) noexcept { g_level.store(level); }

void log_info(std::string_view message) { emit(LogLevel::Info, "info", message); }
void log_warn(std::string_view message) { emit(LogLevel::Warn, "warning", message); }
void log_error(std::string_view message) { emit(LogLevel::Error, "error", message); }

} // namespace factpipe
