#include "tracedvfs/csv.hpp"

#include <cstdio>

namespace tracedvfs {

std::string format_number(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    std::string s(buf);
    if (s == "-0") s = "0";
    return s;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << csv_escape(fields[i]);
    }
    out << '\n';
}

}  // namespace tracedvfs
