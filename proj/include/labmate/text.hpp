#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace labmate::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
/// Fixed-point rendering with `decimals` digits, locale independent.
std::string fixed(double value, int decimals);

/// Strict decimal parse; throws ConfigError naming `what` on failure.
double parse_double(std::string_view s, std::string_view what);
std::int64_t parse_int(std::string_view s, std::string_view what);
bool parse_bool(std::string_view s, std::string_view what);

struct Setting {
  std::string section;  ///< empty outside any [section]
  std::string key;
  std::string value;
  int line = 0;
};

/// INI-flavoured `key = value` table with optional `[section]` headers and
/// `#`/`;` comments.
std::vector<Setting> parse_settings(std::string_view text);

/// Flat table without sections.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

}  // namespace labmate::text
