#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace promptforge {

/// Shortest "%.17g" text that re-parses to the identical double.
std::string format_double(double v);
/// Fixed-point with `digits` decimals, for reports.
std::string format_fixed(double v, int digits);

std::string join(const std::vector<std::string>& parts, std::string_view sep);
/// Splits on `sep`; an empty input gives an empty list.
std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

// Strict parsers; `what` names the field in the ConfigError message.
double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);
std::size_t parse_size(std::string_view text, std::string_view what);

}  // namespace promptforge
