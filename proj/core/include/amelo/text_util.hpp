#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace amelo::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);

/// Splits on `sep`, keeping empty fields.
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool is_word_char(char c) noexcept;

/// Levenshtein edit distance over bytes.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// 1 - distance / max(|a|, |b|); two empty strings are identical (1.0).
double normalized_similarity(std::string_view a, std::string_view b);

/// Case-insensitive search for `needle` beginning at a word boundary of
/// `haystack`. Returns npos when absent.
std::size_t find_word_prefix(std::string_view haystack, std::string_view needle);

/// Shortest round-trippable decimal rendering ("45", "19.8").
std::string format_number(double v);

}  // namespace amelo::text
