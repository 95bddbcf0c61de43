#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace haps {

// Shortest round-trip decimal form of a double (std::to_chars). Used for
// every numeric field we write so artifacts are byte-stable.
std::string format_double(double v);

// Strict full-string parse; throws ConfigError on trailing junk or empty.
double parse_double(std::string_view s);
long long parse_int(std::string_view s);
std::uint64_t parse_uint64(std::string_view s);

// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Whole-file binary read; throws IoError if unreadable.
std::string read_file(const std::filesystem::path& p);

// Write via sibling temp file + rename so readers never see a torn file.
void atomic_write_file(const std::filesystem::path& p, std::string_view bytes);

// Split one CSV line on commas. No quoting: none of our fields contain
// commas by construction.
std::vector<std::string> split_csv_line(std::string_view line);

// File -> lines, dropping the trailing empty line after a final '\n'.
std::vector<std::string> read_lines(const std::filesystem::path& p);

// Same split on an in-memory buffer.
std::vector<std::string> split_lines(std::string_view text);

}  // namespace haps
