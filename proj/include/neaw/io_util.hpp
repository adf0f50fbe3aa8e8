#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace neaw {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file then renames, so readers never observe a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Shortest representation that round-trips a binary64 exactly.
std::string format_g17(double v);

uint64_t file_fnv1a64(const std::filesystem::path& path);

}  // namespace neaw
