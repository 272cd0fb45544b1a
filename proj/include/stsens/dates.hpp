#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace stsens {

// Calendar dates as days since 1970-01-01 (proleptic Gregorian). The
// civil<->serial conversions follow the classic Howard Hinnant algorithms.
struct Date {
    int serial = 0;

    Date() = default;
    explicit Date(int s) : serial(s) {}

    static Date from_ymd(int y, int m, int d) {
        y -= m <= 2;
        const int era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return Date(era * 146097 + static_cast<int>(doe) - 719468);
    }

    void to_ymd(int& y, unsigned& m, unsigned& d) const {
        int z = serial + 719468;
        const int era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const int yy = static_cast<int>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        d = doy - (153 * mp + 2) / 5 + 1;
        m = mp + (mp < 10 ? 3 : -9);
        y = yy + (m <= 2);
    }

    // Monday = 0 ... Sunday = 6. 1970-01-01 was a Thursday.
    int weekday() const {
        int w = (serial + 3) % 7;
        return w < 0 ? w + 7 : w;
    }

    std::string iso() const {
        int y;
        unsigned m, d;
        to_ymd(y, m, d);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
        return buf;
    }

    Date operator+(int days) const { return Date(serial + days); }
    Date operator-(int days) const { return Date(serial - days); }
    int operator-(Date o) const { return serial - o.serial; }
    bool operator==(Date o) const { return serial == o.serial; }
    bool operator!=(Date o) const { return serial != o.serial; }
    bool operator<(Date o) const { return serial < o.serial; }
    bool operator<=(Date o) const { return serial <= o.serial; }
    bool operator>(Date o) const { return serial > o.serial; }
    bool operator>=(Date o) const { return serial >= o.serial; }
};

// Accepts YYYY-MM-DD (and MM-DD-YYYY, which the upstream data tables use).
inline Date parse_date(const std::string& s) {
    int a = 0, b = 0, c = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d", &a, &b, &c) != 3)
        throw std::invalid_argument("unparseable date: '" + s + "'");
    int y, m, d;
    if (a >= 1000) {
        y = a; m = b; d = c;
    } else {
        m = a; d = b; y = c;
    }
    if (m < 1 || m > 12 || d < 1 || d > 31 || y < 1600 || y > 3000)
        throw std::invalid_argument("invalid date: '" + s + "'");
    return Date::from_ymd(y, m, d);
}

}  // namespace stsens
