#pragma once

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "solarsr/error.hpp"

namespace solarsr {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

namespace detail {

inline bool read_int(std::string_view s, std::size_t& pos, std::size_t digits, int& out) {
    if (pos + digits > s.size()) return false;
    int v = 0;
    for (std::size_t i = 0; i < digits; ++i) {
        const char c = s[pos + i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    pos += digits;
    return true;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\'' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\'' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

}  // namespace detail

/// Parses a time of day "HH:MM:SS[.fff...]" into milliseconds since midnight.
inline std::optional<std::chrono::milliseconds> parse_time_of_day(std::string_view s) {
    s = detail::trim(s);
    std::size_t pos = 0;
    int h = 0, m = 0, sec = 0;
    if (!detail::read_int(s, pos, 2, h) || pos >= s.size() || s[pos++] != ':') return std::nullopt;
    if (!detail::read_int(s, pos, 2, m) || pos >= s.size() || s[pos++] != ':') return std::nullopt;
    if (!detail::read_int(s, pos, 2, sec)) return std::nullopt;
    long long frac_ms = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        double scale = 100.0;
        double ms = 0.0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            ms += (s[pos] - '0') * scale;
            scale /= 10.0;
            ++pos;
        }
        frac_ms = static_cast<long long>(ms + 0.5);
    }
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) ++pos;
    if (pos != s.size() || h > 23 || m > 59 || sec > 60) return std::nullopt;
    return std::chrono::hours(h) + std::chrono::minutes(m) + std::chrono::seconds(sec) +
           std::chrono::milliseconds(frac_ms);
}

/// Permissive UTC parser: "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS[.fff][Z]"
/// (a space may replace 'T'), and the legacy FITS "DD/MM/YY" form.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
    using namespace std::chrono;
    s = detail::trim(s);
    std::size_t pos = 0;
    int y = 0, mo = 0, d = 0;
    if (s.size() >= 8 && s[2] == '/' && s[5] == '/') {
        if (!detail::read_int(s, pos, 2, d) || s[pos++] != '/' || !detail::read_int(s, pos, 2, mo) ||
            s[pos++] != '/' || !detail::read_int(s, pos, 2, y) || pos != s.size()) {
            return std::nullopt;
        }
        y += 1900;
    } else {
        if (!detail::read_int(s, pos, 4, y) || pos >= s.size() || s[pos++] != '-') return std::nullopt;
        if (!detail::read_int(s, pos, 2, mo) || pos >= s.size() || s[pos++] != '-') return std::nullopt;
        if (!detail::read_int(s, pos, 2, d)) return std::nullopt;
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    Timestamp ts = time_point_cast<milliseconds>(sys_days{ymd});
    if (pos == s.size()) return ts;
    if (s[pos] != 'T' && s[pos] != ' ') return std::nullopt;
    auto tod = parse_time_of_day(s.substr(pos + 1));
    if (!tod) return std::nullopt;
    return ts + *tod;
}

inline Timestamp parse_timestamp_or_throw(std::string_view s) {
    auto ts = parse_timestamp(s);
    require(ts.has_value(), ErrorCode::InvalidArgument, "unparseable timestamp '" + std::string(s) + "'");
    return *ts;
}

/// Strict ISO-8601 UTC with millisecond precision: YYYY-MM-DDTHH:MM:SS.mmmZ
inline std::string format_timestamp(Timestamp ts) {
    using namespace std::chrono;
    const auto day_point = floor<days>(ts);
    const year_month_day ymd{day_point};
    auto rem = ts - day_point;
    const auto h = duration_cast<hours>(rem);
    rem -= h;
    const auto m = duration_cast<minutes>(rem);
    rem -= m;
    const auto sec = duration_cast<seconds>(rem);
    rem -= sec;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(h.count()),
                  static_cast<int>(m.count()), static_cast<int>(sec.count()), static_cast<int>(rem.count()));
    return buf;
}

}  // namespace solarsr
