#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ragfc {

// Splits on maximal runs of non-whitespace. "a  b\tc" -> {"a","b","c"}.
std::vector<std::string> split_words(std::string_view text);

// Number of whitespace-delimited words.
std::size_t count_words(std::string_view text);

// Keeps at most `max_words` leading words, joined by single spaces.
std::string truncate_words(std::string_view text, std::size_t max_words);

// Retrieval/ROUGE tokenization: lowercase, alphanumeric runs only.
// "Hello, WORLD-42" -> {"hello", "world", "42"}.
std::vector<std::string> tokenize_alnum(std::string_view text);

// Case-insensitive substring test (ASCII).
bool contains_ci(std::string_view haystack, std::string_view needle);

std::string to_lower(std::string_view text);

// Strips leading/trailing whitespace.
std::string trim(std::string_view text);

}  // namespace ragfc
