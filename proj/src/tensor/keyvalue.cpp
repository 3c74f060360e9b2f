#include "egolstm/keyvalue.hpp"

#include <charconv>
#include <set>
#include <stdexcept>

namespace egolstm::kv {

std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

Entries parse(std::string_view text) {
  Entries entries;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const std::string line = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected `key = value`");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) throw std::invalid_argument("duplicate key `" + key + "`");
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

std::string format(const Entries& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

namespace {

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T result{};
  const auto* first = value.data();
  const auto* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, result);
  if (ec != std::errc{} || ptr != last || value.empty()) {
    throw std::invalid_argument("invalid value `" + std::string(value) + "` for `" + std::string(key) + "`");
  }
  return result;
}

}  // namespace

std::int64_t to_int(std::string_view key, std::string_view value) { return parse_number<std::int64_t>(key, value); }

std::uint64_t to_uint(std::string_view key, std::string_view value) {
  return parse_number<std::uint64_t>(key, value);
}

double to_double(std::string_view key, std::string_view value) { return parse_number<double>(key, value); }

std::string from_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace egolstm::kv
