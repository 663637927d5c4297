#include "factpipe/segmenter.hpp"

#include "factpipe/text.hpp"

#include <algorithm>
#include <array>

namespace factpipe {

namespace {

constexpr std::array<std::string_view, 14> kAbbreviations = {
    "dr.", "mr.", "ms.", "mrs.", "prof.", "sr.", "jr.", "st.",
    "vs.", "etc.", "e.g.", "i.e.", "approx.", "cf.",
};

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']' || c == '}'; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// True when the '.' at `dot` closes an abbreviation or an initial. `floor`
// bounds the backwards scan to the current sentence.
bool is_abbreviation(std::string_view text, std::size_t floor, std::size_t dot) {
    std::size_t begin = dot;
    while (begin > floor && !is_space(text[begin - 1])) {
        --begin;
    }
    while (begin < dot && (text[begin] == '(' || text[begin] == '"' || text[begin] == '\'')) {
        ++begin;
    }
    const auto token = text.substr(begin, dot + 1 - begin);
    if (token.size() == 2 && is_upper(token[0])) {
        return true;
    }
    const auto lower = to_lower_ascii(token);
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), lower) != kAbbreviations.end();
}

// A newline followed (through whitespace only) by another newline.
bool starts_blank_line(std::string_view text, std::size_t pos) {
    if (text[pos] != '\n') {
        return false;
    }
    for (std::size_t i = pos + 1; i < text.size() && is_space(text[i]); ++i) {
        if (text[i] == '\n') {
            return true;
        }
    }
    return false;
}

} // namespace

std::vector<Sentence> split_sentences(std::string_view text) {
    std::vector<Sentence> out;
    constexpr auto npos = std::string_view::npos;
    std::size_t start = npos;

    auto emit = [&](std::size_t end) {
        while (end > start && is_space(text[end - 1])) {
            --end;
        }
        if (start != npos && end > start) {
            out.push_back({out.size(), start, end, std::string(text.substr(start, end - start))});
        }
        start = npos;
    };

    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (is_space(c)) {
            if (start != npos && starts_blank_line(text, i)) {
                emit(i);
            }
            ++i;
            continue;
        }
        if (start == npos) {
            start = i;
        }
        if (!is_terminal(c)) {
            ++i;
            continue;
        }

        std::size_t run_end = i;
        while (run_end < text.size() && is_terminal(text[run_end])) {
            ++run_end;
        }
        while (run_end < text.size() && is_closer(text[run_end])) {
            ++run_end;
        }
        std::size_t next = run_end;
        while (next < text.size() && is_space(text[next])) {
            ++next;
        }

        bool boundary = false;
        if (next == text.size()) {
            boundary = true;
        } else if (next > run_end && (is_upper(text[next]) || is_digit(text[next]))) {
            const bool single_dot = run_end == i + 1 && c == '.';
            boundary = !(single_dot && is_abbreviation(text, start, i));
        }
        if (boundary) {
            emit(run_end);
        }
        i = run_end;
    }
    if (start != npos) {
        emit(text.size());
    }
    return out;
}

std::vector<Sentence> whole_text_unit(std::string_view text) {
    const auto body = trim(text);
    if (body.empty()) {
        return {};
    }
    const auto start = static_cast<std::size_t>(body.data() - text.data());
    return {Sentence{0, start, start + body.size(), std::string(body)}};
}

} // namespace factpipe
