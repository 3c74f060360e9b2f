#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace egolstm::kv {

using Entries = std::vector<std::pair<std::string, std::string>>;

// Parses UTF-8 `key = value` lines. Blank lines and lines starting with '#'
// are skipped; whitespace around key and value is trimmed. Malformed lines
// and repeated keys are rejected with std::invalid_argument.
Entries parse(std::string_view text);
std::string format(const Entries& entries);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

std::int64_t to_int(std::string_view key, std::string_view value);
std::uint64_t to_uint(std::string_view key, std::string_view value);
double to_double(std::string_view key, std::string_view value);
// Shortest representation that parses back to the same double.
std::string from_double(double v);

}  // namespace egolstm::kv
