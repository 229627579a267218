#pragma once

// Minimal comma-separated reader/writer helpers for the plain numeric files
// this project exchanges. No quoting: none of the schemas carry free text.

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "bss/core.hpp"

namespace bss::csv {

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
            field.remove_suffix(1);
        out.push_back(field);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline bool getline_clean(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open " + path);
    return f;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    return f;
}

/// Reads the header line and checks it against `expected`. Returns false on an empty stream.
inline bool expect_header(std::istream& in, std::string_view expected, const std::string& what) {
    std::string line;
    if (!getline_clean(in, line)) return false;
    if (line != expected)
        throw ValidationError(what + ": expected header '" + std::string(expected) + "', got '" + line + "'");
    return true;
}

inline double to_double(std::string_view s, const std::string& ctx) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ValidationError(ctx + ": bad number '" + std::string(s) + "'");
    return v;
}

inline long long to_int(std::string_view s, const std::string& ctx) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ValidationError(ctx + ": bad integer '" + std::string(s) + "'");
    return v;
}

inline bool to_flag(std::string_view s, const std::string& ctx) {
    if (s == "0") return false;
    if (s == "1") return true;
    throw ValidationError(ctx + ": flag must be 0 or 1, got '" + std::string(s) + "'");
}

/// Shortest round-trip representation of a double.
inline std::string num(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

/// Fixed-point representation for reports.
inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string where(const std::string& file, std::size_t line) { return file + ":" + std::to_string(line); }

}  // namespace bss::csv
