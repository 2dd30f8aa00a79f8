#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace coeval::text {

std::string trim(std::string_view s);
std::string trim_right(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Quotes a CSV field when it contains a comma, quote or line break.
std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);
/// RFC 4180 records; quoted fields may span lines. Blank lines are skipped.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

}  // namespace coeval::text
