#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cogdiag {

// All helpers throw IoError on filesystem failure.

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

void append_line(const std::filesystem::path& path, const std::string& line);

std::vector<std::string> read_lines(const std::filesystem::path& path);

void ensure_dir(const std::filesystem::path& dir);

// Hex FNV digest of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace cogdiag
