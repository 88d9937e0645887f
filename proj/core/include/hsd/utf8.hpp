#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace hsd::utf8 {

/// One decoded code point with its byte span in the source string.
/// Invalid sequences decode byte-by-byte with valid == false and cp == U+FFFD.
struct Char {
    char32_t cp = 0;
    std::size_t offset = 0;
    std::size_t size = 0;
    bool valid = true;
};

std::vector<Char> decode(std::string_view text);

void append(std::string& out, char32_t cp);

/// Unicode White_Space property.
bool is_space(char32_t cp);

/// Splits on runs of Unicode whitespace; no empty tokens.
std::vector<std::string> split_whitespace(std::string_view text);

} // namespace hsd::utf8
