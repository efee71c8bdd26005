#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace mixedabc::io {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Fixed-point rendering with `digits` decimals ("0.777").
std::string format_fixed(double v, int digits);

/// Parses the whole string as a double; nullopt on any trailing junk.
std::optional<double> parse_double(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

/// Strips a trailing carriage return.
std::string chomp(std::string_view s);

std::string read_file(const std::filesystem::path& path);

/// Replaces the file's contents, creating parent directories as needed.
/// Throws IoError.
void write_file(const std::filesystem::path& path, std::string_view content);

nlohmann::json read_json(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace mixedabc::io
