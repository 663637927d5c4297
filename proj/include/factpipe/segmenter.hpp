#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace factpipe {

/// A sentence of a response. Offsets are byte offsets into the source text;
/// `text` is exactly `source.substr(char_start, char_end - char_start)`.
struct Sentence {
    std::size_t index = 0;
    std::size_t char_start = 0;
    std::size_t char_end = 0;
    std::string text;

    bool operator==(const Sentence&) const = default;
};

/// Rule-based English sentence splitter.
///
/// A boundary follows a run of terminal punctuation ('.', '!', '?', plus any
/// closing quotes or brackets) when the next non-space character is an
/// uppercase ASCII letter or a digit, or when the text ends. A lone '.' after
/// a known abbreviation ("Dr.", "e.g.", "vs.", ...) or a single capital
/// initial does not end a sentence. A blank line always ends one. Sentences
/// never begin or end with whitespace.
[[nodiscard]] std::vector<Sentence> split_sentences(std::string_view text);

/// The whole response as one unit (bypasses segmentation). Empty when the
/// text is blank.
[[nodiscard]] std::vector<Sentence> whole_text_unit(std::string_view text);

} // namespace factpipe
