#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace ems {

// Shortest decimal form that round-trips; '.' separator regardless of locale.
std::string format_double(double value);
// Fixed number of decimals, locale independent.
std::string format_fixed(double value, int decimals);
std::optional<double> parse_double(std::string_view text);

// Writes to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);

}  // namespace ems
