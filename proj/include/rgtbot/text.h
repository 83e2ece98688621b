#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rgtbot::text {

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

// Decimal text that round-trips to the same double ("%.17g").
std::string format_double(double v);
// Exact hexadecimal float ("%a").
std::string format_hex(double v);

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Flat `key = value` lines; `#` starts a comment. Keys may repeat.
std::vector<KeyValue> parse_key_values(std::string_view content);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace rgtbot::text
