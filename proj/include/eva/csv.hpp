#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eva/common.hpp"

namespace eva::csv {

// Doubles are printed with %.17g so that a parse of the printed text
// recovers the exact bit pattern (required for policy round-trips and
// byte-identical reruns).
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double to_double(const std::string& s, const std::string& context) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("cannot parse '" + s + "' as number in " + context);
    }
}

inline long to_long(const std::string& s, const std::string& context) {
    try {
        size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("cannot parse '" + s + "' as integer in " + context);
    }
}

inline std::vector<std::vector<std::string>> read_rows(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(split(line));
    }
    return rows;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open file: " + path);
    return f;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write file: " + path);
    return f;
}

}  // namespace eva::csv
