#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xpia {

// 64-bit FNV-1a. Stable across platforms and runs; used wherever the harness
// needs a reproducible id or bucket assignment.
uint64_t fnv1a64(std::string_view data);

// Lower-case 16-digit hex rendering of a 64-bit value.
std::string to_hex16(uint64_t value);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Case-insensitive substring test (ASCII).
bool contains_ci(std::string_view haystack, std::string_view needle);

// Number of non-overlapping occurrences of `needle` in `haystack`.
size_t count_occurrences(std::string_view haystack, std::string_view needle);

// Replaces every occurrence of `from` with `to`.
std::string replace_all(std::string_view s, std::string_view from, std::string_view to);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Splits file content into lines. Handles \n and \r\n; a trailing newline
// does not produce an extra empty line.
std::vector<std::string> split_lines(std::string_view content);

struct parsed_url {
    std::string scheme;
    std::string host;
    int port = 0;
    std::string path;  // always begins with '/'
};

// Parses http URLs of the form scheme://host[:port][/path]. Returns nullopt
// for anything it cannot handle (no scheme, empty host, bad port).
std::optional<parsed_url> parse_url(std::string_view url);

}  // namespace xpia
