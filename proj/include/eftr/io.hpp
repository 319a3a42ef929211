#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace eftr {

// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);
// Strict parse of a full decimal token; false on trailing garbage.
bool parse_double(std::string_view token, double& out);

std::uint64_t fnv1a64(std::string_view text);
std::string hex64(std::uint64_t v);

std::string read_file(const std::string& path);
// Writes to "<path>.tmp" and renames over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace eftr
