#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cds::io {

std::string read_file(const std::filesystem::path& path);

/// Writes atomically enough for our purposes: truncate, write, check.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Shortest decimal form that round-trips to the same double (at most 17
/// significant digits).
std::string format_double(double value);

/// Parses a full token as a double; returns false on trailing garbage.
bool parse_double(std::string_view text, double& out);
bool parse_long(std::string_view text, long& out);

std::vector<std::string_view> split(std::string_view line, char sep);

}  // namespace cds::io
