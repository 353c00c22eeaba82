#include "etax/calendar.hpp"

#include <array>
#include <charconv>

namespace etax::cal {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static constexpr std::array<int, 12> lengths = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return lengths[static_cast<std::size_t>(m - 1)];
}

int day_of_year(int y, int m, int d) {
    int doy = d;
    for (int mm = 1; mm < m; ++mm) doy += days_in_month(y, mm);
    return doy;
}

// ISO long years have 53 weeks.
bool iso_long_year(int y) {
    const int jan1 = weekday_from_days(days_from_civil(y, 1, 1));  // Mon=0
    return jan1 == 3 || (is_leap(y) && jan1 == 2);
}

}  // namespace

std::int64_t days_from_civil(int y, int m, int d) {
    // Howard Hinnant's era-based algorithm.
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

Civil civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    Civil c;
    c.year = static_cast<int>(y + (m <= 2));
    c.month = static_cast<int>(m);
    c.day = static_cast<int>(d);
    return c;
}

std::int64_t to_epoch(const Civil& c) {
    return days_from_civil(c.year, c.month, c.day) * 86400 +
           static_cast<std::int64_t>(c.hour) * 3600 + static_cast<std::int64_t>(c.minute) * 60 +
           c.second;
}

Civil from_epoch(std::int64_t t) {
    std::int64_t days = t / 86400;
    std::int64_t rem = t % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    Civil c = civil_from_days(days);
    c.hour = static_cast<int>(rem / 3600);
    c.minute = static_cast<int>((rem % 3600) / 60);
    c.second = static_cast<int>(rem % 60);
    return c;
}

int weekday_from_days(std::int64_t days) {
    // 1970-01-01 is a Thursday.
    const std::int64_t w = (days + 3) % 7;
    return static_cast<int>(w < 0 ? w + 7 : w);
}

int iso_week(int year, int month, int day) {
    const int dow = weekday_from_days(days_from_civil(year, month, day)) + 1;  // Mon=1..Sun=7
    const int week = (day_of_year(year, month, day) - dow + 10) / 7;
    if (week < 1) return iso_long_year(year - 1) ? 53 : 52;
    if (week > 52 && !iso_long_year(year)) return 1;
    return week;
}

bool parse_timestamp(std::string_view text, std::string_view format, std::int64_t& epoch_out) {
    Civil c;
    std::size_t ti = 0;

    auto read_int = [&](int width_max, int lo, int hi, int& out) -> bool {
        std::size_t start = ti;
        while (ti < text.size() && ti - start < static_cast<std::size_t>(width_max) &&
               text[ti] >= '0' && text[ti] <= '9')
            ++ti;
        if (ti == start) return false;
        int v = 0;
        const auto res = std::from_chars(text.data() + start, text.data() + ti, v);
        if (res.ec != std::errc{}) return false;
        if (v < lo || v > hi) return false;
        out = v;
        return true;
    };

    for (std::size_t fi = 0; fi < format.size(); ++fi) {
        if (format[fi] == '%' && fi + 1 < format.size()) {
            ++fi;
            bool ok = true;
            switch (format[fi]) {
                case 'Y': ok = read_int(4, 1, 9999, c.year); break;
                case 'm': ok = read_int(2, 1, 12, c.month); break;
                case 'd': ok = read_int(2, 1, 31, c.day); break;
                case 'H': ok = read_int(2, 0, 23, c.hour); break;
                case 'M': ok = read_int(2, 0, 59, c.minute); break;
                case 'S': ok = read_int(2, 0, 60, c.second); break;
                case '%':
                    ok = ti < text.size() && text[ti] == '%';
                    ++ti;
                    break;
                default: return false;  // unsupported directive
            }
            if (!ok) return false;
        } else {
            if (ti >= text.size() || text[ti] != format[fi]) return false;
            ++ti;
        }
    }
    // ignore trailing whitespace/CR, reject other trailing garbage
    while (ti < text.size() && (text[ti] == ' ' || text[ti] == '\r')) ++ti;
    if (ti != text.size()) return false;
    if (c.day > days_in_month(c.year, c.month)) return false;
    if (c.second == 60) c.second = 59;  // fold leap second
    epoch_out = to_epoch(c);
    return true;
}

std::string format_timestamp(std::int64_t epoch, std::string_view format) {
    const Civil c = from_epoch(epoch);
    std::string out;
    auto pad = [&](int v, int w) {
        std::string s = std::to_string(v);
        while (static_cast<int>(s.size()) < w) s.insert(s.begin(), '0');
        out += s;
    };
    for (std::size_t fi = 0; fi < format.size(); ++fi) {
        if (format[fi] == '%' && fi + 1 < format.size()) {
            ++fi;
            switch (format[fi]) {
                case 'Y': pad(c.year, 4); break;
                case 'm': pad(c.month, 2); break;
                case 'd': pad(c.day, 2); break;
                case 'H': pad(c.hour, 2); break;
                case 'M': pad(c.minute, 2); break;
                case 'S': pad(c.second, 2); break;
                case '%': out += '%'; break;
                default: out += format[fi]; break;
            }
        } else {
            out += format[fi];
        }
    }
    return out;
}

}  // namespace etax::cal
