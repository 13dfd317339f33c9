#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gct {

std::string_view trim(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::string to_lower(std::string_view s);
/// Lowercase, collapse runs of whitespace to one space, trim.
std::string collapse_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_word(const std::vector<std::string>& words, std::string_view w);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace gct
