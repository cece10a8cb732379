#pragma once

// Plain-text key=value files: one pair per line, '#' starts a comment line.
// Doubles are written with 17 significant digits so they parse back exactly.

#include <milpool/error.hpp>
#include <milpool/metrics.hpp>

#include <cstdio>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace milpool::kv {

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

template <class Seq>
std::string join(const Seq& items, char sep = ',') {
    std::string out;
    for (const auto& x : items) {
        if (!out.empty()) out += sep;
        out += std::to_string(x);
    }
    return out;
}

using Pairs = std::vector<std::pair<std::string, std::string>>;

inline void write(std::ostream& out, const Pairs& pairs) {
    for (const auto& [k, v] : pairs) out << k << '=' << v << '\n';
}

/// Parses key=value lines. Duplicate keys keep the last value.
inline std::map<std::string, std::string> parse(std::istream& in) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw Error("key=value parse error on line " + std::to_string(lineno) + ": '" + line + "'");
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

/// Machine-readable metrics report.
///
///   format=milpool-metrics
///   version=1
///   classes=<K>
///   evaluated=<count of non-skipped classes>
///   skipped=<comma-separated class indices>
///   infinite_d_prime=<comma-separated class indices>
///   macro.map / macro.auc / macro.d_prime
///   class.<k>.ap / class.<k>.auc / class.<k>.d_prime   (evaluated classes only)
inline Pairs report_pairs(const MetricsReport& r) {
    Pairs p{{"format", "milpool-metrics"},
            {"version", "1"},
            {"classes", std::to_string(r.per_class.size())},
            {"evaluated", std::to_string(r.evaluated())},
            {"skipped", join(r.skipped_classes)},
            {"infinite_d_prime", join(r.infinite_d_prime)},
            {"macro.map", format_double(r.macro.ap)},
            {"macro.auc", format_double(r.macro.auc)},
            {"macro.d_prime", format_double(r.macro.d_prime)}};
    for (std::size_t k = 0; k < r.per_class.size(); ++k) {
        if (r.skipped(k)) continue;
        const std::string pre = "class." + std::to_string(k) + ".";
        p.emplace_back(pre + "ap", format_double(r.per_class[k].ap));
        p.emplace_back(pre + "auc", format_double(r.per_class[k].auc));
        p.emplace_back(pre + "d_prime", format_double(r.per_class[k].d_prime));
    }
    return p;
}

inline void write_report(std::ostream& out, const MetricsReport& r) { write(out, report_pairs(r)); }

/// Human-readable table.
inline void print_report(std::ostream& out, const MetricsReport& r) {
    const auto flags = out.flags();
    out << std::fixed << std::setprecision(4);
    out << "class        AP       AUC   d-prime\n";
    for (std::size_t k = 0; k < r.per_class.size(); ++k) {
        out << std::setw(5) << k;
        if (r.skipped(k)) {
            out << "   (skipped: needs positive and negative bags)\n";
            continue;
        }
        out << std::setw(10) << r.per_class[k].ap << std::setw(10) << r.per_class[k].auc << std::setw(10)
            << r.per_class[k].d_prime << '\n';
    }
    out << "macro" << std::setw(10) << r.macro.ap << std::setw(10) << r.macro.auc << std::setw(10) << r.macro.d_prime
        << "   (" << r.evaluated() << " classes)\n";
    out.flags(flags);
}

} // namespace milpool::kv
