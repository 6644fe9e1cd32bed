#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace strand {

// FNV-1a 64 over raw bytes; used for checkpoint payload digests and run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// Two-column (index, value) tab-delimited profile/reactivity files.
// Lines: "<1-based index>\t<value>"; returns values ordered by index.
std::vector<double> read_two_column(const std::filesystem::path& path);
void write_two_column(const std::filesystem::path& path, const std::vector<double>& values);

std::string hex64(std::uint64_t v);

}  // namespace strand
