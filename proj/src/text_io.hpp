#pragma once

// File and CSV helpers shared by the loaders.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nsad::detail {

std::string read_file(const std::filesystem::path& path);                      // throws IoError
void write_file(const std::filesystem::path& path, std::string_view content);  // throws IoError

// Splits one CSV line. Double-quoted fields may contain commas and doubled
// quotes. Throws DataError on an unterminated quote.
std::vector<std::string> split_csv_line(std::string_view line);

std::string csv_escape(std::string_view field);

// Lines without trailing '\r'; a final empty line is dropped.
std::vector<std::string> split_lines(std::string_view text);

std::string trim(std::string_view s);

// Strict decimal parse of the whole field; returns false on any junk.
bool parse_double(std::string_view text, double& out);

}  // namespace nsad::detail
