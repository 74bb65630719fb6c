#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace tracedvfs {

/// Shortest decimal with 9 significant digits ("%.9g").
std::string format_number(double value);

std::string csv_escape(std::string_view field);

/// Writes one RFC-4180 record followed by LF.
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace tracedvfs
