#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace attnflow::text {

// Shortest decimal form that round-trips to the same double.
std::string format_number(double value);

// Empty string for a missing value.
std::string format_optional(const std::optional<double>& value);

std::vector<std::string_view> split(std::string_view line, char delimiter);

std::optional<double> parse_double(std::string_view field);
std::optional<long long> parse_int(std::string_view field);

std::string_view trim(std::string_view s);

}  // namespace attnflow::text
