#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace vatlab {

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
void atomic_write_file(const std::filesystem::path& path, std::string_view contents);

/// Whole-file read. Throws FormatError if the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Like read_file, but transparently inflates gzip streams (magic 1f 8b).
std::string read_file_maybe_gzip(const std::filesystem::path& path);

}  // namespace vatlab
