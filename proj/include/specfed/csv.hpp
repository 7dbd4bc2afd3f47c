#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace specfed {

/// Shortest representation that round-trips a double exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // prefer the shorter %.15g / %.16g form when it parses back exactly
    for (int prec = 15; prec <= 16; ++prec) {
        char tight[40];
        std::snprintf(tight, sizeof(tight), "%.*g", prec, v);
        if (std::strtod(tight, nullptr) == v) return tight;
    }
    return buf;
}

/// Append-only CSV writer with deterministic float formatting.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& header) : os_(path) {
        if (!os_) throw std::runtime_error("cannot open for writing: " + path);
        os_ << header << '\n';
    }

    template <typename... Ts>
    void row(const Ts&... fields) {
        bool first = true;
        ((append_field(fields, first), first = false), ...);
        os_ << '\n';
    }

    void flush() { os_.flush(); }

private:
    template <typename T>
    void append_field(const T& v, bool first) {
        if (!first) os_ << ',';
        if constexpr (std::is_same_v<T, double> || std::is_same_v<T, float>) {
            os_ << format_double(static_cast<double>(v));
        } else {
            os_ << v;
        }
    }

    std::ofstream os_;
};

}  // namespace specfed
