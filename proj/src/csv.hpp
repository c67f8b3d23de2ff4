#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace expavg::detail {

/// Comma-separated fields with surrounding blanks trimmed.
std::vector<std::string> split_csv_line(const std::string& line);

/// Strict decimal parse; malformed_record naming the row otherwise.
double parse_number(const std::string& s, std::size_t row);

}  // namespace expavg::detail
