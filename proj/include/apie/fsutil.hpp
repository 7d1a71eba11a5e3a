#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace apie {

/// Throws DataError{IoError} when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

/// Writes to a unique sibling temp file and renames it over `path`, so readers
/// see either the old or the new content. Creates parent directories.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::vector<std::string> split_lines(std::string_view text);

}  // namespace apie
