#pragma once

#include <string_view>

namespace factpipe {

enum class LogLevel { Debug, Info, Warn, Error, Off };

/// Messages below `level` are dropped. Default: Warn.
void set_log_level(LogLevel level) noexcept;

void log_info(std::string_view message);
void log_warn(std::string_view message);
void log_error(std::string_view message);

} // namespace factpipe
