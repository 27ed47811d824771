#pragma once

// UTF-8 helpers shared by ingestion, tokenization and profiling.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace fieldalign::text {

/// Byte offset of the first invalid sequence, or npos when `s` is valid UTF-8.
std::size_t find_invalid_utf8(std::string_view s) noexcept;

struct CodePoint {
    char32_t value;
    std::size_t offset;  // byte offset into the source string
    std::size_t length;  // encoded length in bytes
};

/// Decodes valid UTF-8. Invalid bytes decode as U+FFFD of length 1.
std::vector<CodePoint> decode(std::string_view s);

bool is_unicode_space(char32_t c) noexcept;

/// Backslash-escapes \\, tab, newline, carriage return and NUL.
std::string escape(std::string_view s);
std::string unescape(std::string_view s);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

}  // namespace fieldalign::text
