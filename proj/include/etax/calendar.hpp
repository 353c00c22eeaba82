#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace etax::cal {

// Civil date-time in the dataset's local clock. No time-zone conversion is
// ever applied: timestamps are interpreted as naive wall-clock values and
// mapped onto a linear seconds axis for arithmetic.
struct Civil {
    int year = 1970;
    int month = 1;  // 1-12
    int day = 1;    // 1-31
    int hour = 0;
    int minute = 0;
    int second = 0;
};

// Days since 1970-01-01 (proleptic Gregorian).
std::int64_t days_from_civil(int year, int month, int day);
Civil civil_from_days(std::int64_t days);

std::int64_t to_epoch(const Civil& c);
Civil from_epoch(std::int64_t t);

// 0 = Monday ... 6 = Sunday.
int weekday_from_days(std::int64_t days);

// ISO-8601 week number (1-53).
int iso_week(int year, int month, int day);

// Minimal strptime-style parser supporting %Y %m %d %H %M %S plus literal
// characters. Returns false on any mismatch.
bool parse_timestamp(std::string_view text, std::string_view format, std::int64_t& epoch_out);

std::string format_timestamp(std::int64_t epoch, std::string_view format = "%Y-%m-%d %H:%M:%S");

}  // namespace etax::cal
