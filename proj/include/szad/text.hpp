#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace szad::text {

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

bool parse_double(std::string_view token, double& out);
bool parse_size(std::string_view token, std::size_t& out);

std::vector<std::string_view> split(std::string_view line, char sep);

std::string_view trim(std::string_view s);

}  // namespace szad::text
