#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace care::text {

/// Lowercases and splits on runs of non-alphanumeric ASCII characters.
std::vector<std::string> tokenize(std::string_view s);

/// Splits at '.', '!', '?' and newlines. A '.' between two digits is a
/// decimal point, not a boundary. Empty (whitespace-only) pieces are dropped.
std::vector<std::string> split_sentences(std::string_view s);

/// Removes "[Fact N]" citation tags.
std::string strip_fact_tags(std::string_view s);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Lowercase, strip punctuation, drop leading articles, collapse whitespace.
std::string normalize_answer(std::string_view s);

/// FNV-1a 64-bit digest as 16 hex chars; used for fingerprints, not security.
std::string fnv1a_hex(std::string_view data);

/// Shortest round-trip decimal for a double.
std::string format_double(double v);

/// Fixed two-decimal formatting used in human-readable sentences.
std::string format_fixed(double v, int decimals);

}  // namespace care::text
