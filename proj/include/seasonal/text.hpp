#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace seasonal::text {

struct CodePoint {
    char32_t value;
    std::size_t begin;  // byte offset of the first code unit
    std::size_t end;    // one past the last code unit
};

/// Decodes UTF-8. Each invalid byte becomes U+FFFD so offsets stay usable.
std::vector<CodePoint> decode_utf8(std::string_view bytes);
void append_utf8(std::string& out, char32_t cp);

/// Simple case folding for ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic.
char32_t to_lower(char32_t cp);
std::string to_lower(std::string_view utf8);

/// Letters and digits. Everything in the punctuation, symbol, space and emoji
/// blocks is a separator; other non-ASCII code points count as letters.
bool is_word_char(char32_t cp);
bool is_apostrophe(char32_t cp);
bool is_space(char32_t cp);

/// Collapses runs of whitespace to a single ASCII space and trims both ends.
std::string collapse_whitespace(std::string_view utf8);

}  // namespace seasonal::text
