#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace topictrail {

/// Lowercase hex SHA-256 of a byte string (64 characters).
std::string sha256_hex(std::string_view bytes);

std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Lines without terminators. A trailing newline does not produce an empty
/// final line.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace topictrail
