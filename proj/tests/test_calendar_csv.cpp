#include <doctest.h>

#include "etax/calendar.hpp"
#include "etax/csv.hpp"

using namespace etax;

// Reference vectors computed with an independent calendar implementation.
struct CalendarVector {
    const char* text;
    std::int64_t epoch;
    int month, iso_week, weekday, bin;
};

static const CalendarVector kVectors[] = {
    {"2015-01-15 19:05:39", 1421348739, 1, 3, 3, 229},
    {"2015-12-31 00:00:00", 1451520000, 12, 53, 3, 0},
    {"2016-01-01 12:00:00", 1451649600, 1, 53, 4, 144},
    {"2015-03-01 23:59:00", 1425254340, 3, 9, 6, 287},
    {"2016-02-29 08:30:00", 1456734600, 2, 9, 0, 102},
    {"2014-12-29 10:00:00", 1419847200, 12, 1, 0, 120},
    {"2017-01-01 05:00:00", 1483246800, 1, 52, 6, 60},
};

TEST_CASE("timestamp parsing matches the reference epochs") {
    for (const auto& v : kVectors) {
        std::int64_t epoch = 0;
        REQUIRE(cal::parse_timestamp(v.text, "%Y-%m-%d %H:%M:%S", epoch));
        CHECK(epoch == v.epoch);
        CHECK(cal::format_timestamp(epoch) == v.text);
    }
}

TEST_CASE("civil round trip over a dense range") {
    for (std::int64_t day = 15000; day < 18000; day += 13) {
        const cal::Civil c = cal::civil_from_days(day);
        CHECK(cal::days_from_civil(c.year, c.month, c.day) == day);
    }
}

TEST_CASE("iso week and weekday match the reference vectors") {
    for (const auto& v : kVectors) {
        const cal::Civil c = cal::from_epoch(v.epoch);
        CHECK(c.month == v.month);
        CHECK(cal::iso_week(c.year, c.month, c.day) == v.iso_week);
        CHECK(cal::weekday_from_days(cal::days_from_civil(c.year, c.month, c.day)) == v.weekday);
    }
}

TEST_CASE("parse_timestamp rejects malformed input") {
    std::int64_t epoch = 0;
    CHECK_FALSE(cal::parse_timestamp("2015-13-01 00:00:00", "%Y-%m-%d %H:%M:%S", epoch));
    CHECK_FALSE(cal::parse_timestamp("2015-02-30 00:00:00", "%Y-%m-%d %H:%M:%S", epoch));
    CHECK_FALSE(cal::parse_timestamp("not a date", "%Y-%m-%d %H:%M:%S", epoch));
    CHECK_FALSE(cal::parse_timestamp("2015-01-01 00:00:00 extra", "%Y-%m-%d %H:%M:%S", epoch));
    CHECK(cal::parse_timestamp("2015-01-01 00:00:00\r", "%Y-%m-%d %H:%M:%S", epoch));
}

TEST_CASE("csv splitting honors quotes and escapes") {
    std::vector<std::string> fields;
    csv::split_line("a,\"b,c\",\"d\"\"e\",f\r", fields);
    REQUIRE(fields.size() == 4);
    CHECK(fields[0] == "a");
    CHECK(fields[1] == "b,c");
    CHECK(fields[2] == "d\"e");
    CHECK(fields[3] == "f");
}

TEST_CASE("csv join/split round trip") {
    const std::vector<std::string> original = {"plain", "with,comma", "with\"quote", ""};
    std::vector<std::string> back;
    csv::split_line(csv::join_fields(original), back);
    CHECK(back == original);
}
