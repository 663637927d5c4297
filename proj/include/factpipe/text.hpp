#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace factpipe {

/// Number of maximal runs of non-whitespace characters.
[[nodiscard]] std::size_t count_tokens(std::string_view text) noexcept;

[[nodiscard]] bool is_space(char c) noexcept;
[[nodiscard]] std::string_view trim(std::string_view text) noexcept;
[[nodiscard]] std::string to_lower_ascii(std::string_view text);

/// Splits on '\n', dropping one trailing '\r' from each line.
[[nodiscard]] std::vector<std::string_view> split_lines(std::string_view text);

/// Shortest decimal string that parses back to exactly `value`.
[[nodiscard]] std::string format_real(double value);

// UTF-8 helpers. Invalid sequences decode byte-by-byte as U+FFFD.

[[nodiscard]] std::u32string decode_utf8(std::string_view text);
[[nodiscard]] std::size_t utf8_length(std::string_view text);

/// Substring by code point offsets [start, end). Offsets past the end clamp.
[[nodiscard]] std::string utf8_substr(std::string_view text, std::size_t start, std::size_t end);

} // namespace factpipe
