#pragma once

#include <charconv>
#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "qoq/errors.hpp"

namespace qoq {

/// Calendar month. All series in this library are monthly; there is no day
/// component by design.
struct YearMonth {
    int year = 0;
    int month = 1;  // 1..12

    auto operator<=>(const YearMonth&) const = default;

    /// Months since 0000-01; makes gap arithmetic trivial.
    int index() const { return year * 12 + (month - 1); }

    static YearMonth from_index(int idx) {
        YearMonth ym;
        ym.year = idx / 12;
        ym.month = idx % 12 + 1;
        if (ym.month <= 0) {  // negative years
            ym.year -= 1;
            ym.month += 12;
        }
        return ym;
    }

    YearMonth next() const { return from_index(index() + 1); }

    std::string str() const {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
        return buf;
    }
};

/// Number of months in [start, end], endpoints included.
inline int month_count(YearMonth start, YearMonth end) {
    return end.index() - start.index() + 1;
}

/// Parses "YYYY-MM" or "YYYY-MM-DD" (the day is ignored).
inline YearMonth parse_year_month(std::string_view s) {
    auto fail = [&] { throw ParseError("bad year-month '" + std::string(s) + "' (want YYYY-MM or YYYY-MM-DD)"); };
    if (s.size() != 7 && s.size() != 10) fail();
    if (s[4] != '-') fail();
    if (s.size() == 10 && s[7] != '-') fail();
    YearMonth ym;
    auto r1 = std::from_chars(s.data(), s.data() + 4, ym.year);
    auto r2 = std::from_chars(s.data() + 5, s.data() + 7, ym.month);
    if (r1.ec != std::errc{} || r1.ptr != s.data() + 4) fail();
    if (r2.ec != std::errc{} || r2.ptr != s.data() + 7) fail();
    if (ym.month < 1 || ym.month > 12) fail();
    return ym;
}

}  // namespace qoq
