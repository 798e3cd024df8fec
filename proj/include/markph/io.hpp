#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace markph {

// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

// Strict full-field parse; nullopt on empty or trailing garbage.
std::optional<double> parse_double(std::string_view text);

std::vector<std::string_view> split_csv_line(std::string_view line);
std::string_view trim(std::string_view s);

}  // namespace markph
