#pragma once

// Internal helpers for the comma-separated and line-delimited artifacts.

#include "evscout/common.hpp"

#include <charconv>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace evscout::detail {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw Error("malformed_table", "not a number: '" + std::string(s) + "'");
    }
    return v;
}

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

/// Reads "#<format>,<version>[,extra...]" and checks format and version.
inline std::vector<std::string> read_artifact_header(std::istream& in, std::string_view format,
                                                     int version) {
    std::string line;
    if (!std::getline(in, line) || line.empty() || line[0] != '#') {
        throw VersionMismatch("missing '#" + std::string(format) + "' header");
    }
    auto fields = split_csv(std::string_view(line).substr(1));
    if (fields.size() < 2 || fields[0] != format) {
        throw VersionMismatch("expected '" + std::string(format) + "' artifact");
    }
    if (fields[1] != std::to_string(version)) {
        throw VersionMismatch(std::string(format) + " version " + fields[1] + ", expected " +
                              std::to_string(version));
    }
    return fields;
}

}  // namespace evscout::detail
