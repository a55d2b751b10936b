#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace care::csv {

using Row = std::vector<std::string>;

/// Parses comma-separated text. Double-quoted cells may contain commas; blank
/// lines are skipped. Line numbers (1-based) are kept alongside each row.
struct Table {
  std::vector<Row> rows;
  std::vector<std::size_t> line_numbers;
};

Table parse(std::string_view content);
Table read_file(const std::filesystem::path& path);

/// Strict full-cell numeric parse (surrounding whitespace allowed).
std::optional<double> parse_number(std::string_view cell);

std::string escape(std::string_view cell);

}  // namespace care::csv
