#include <gtest/gtest.h>

#include <random>

#include "bss/core.hpp"

using namespace bss;

namespace {

Layout tiny_layout(int n) {
    Layout l;
    for (int k = 0; k < n; ++k) l.stations.push_back(Station{k, 10, 5, 0, 0, 0});
    l.graph = TravelGraph(n + 1);
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
            if (i != j) l.graph.set(i, j, 100, 500);
    return l;
}

}  // namespace

TEST(HalfHourIndex, EpochOriginAndBoundaries) {
    const Date epoch = make_date(2015, 1, 1);
    EXPECT_EQ(hh_index({epoch, 0}, epoch).index, 0);
    EXPECT_EQ(hh_index(parse_timestamp("2015-01-01T00:29:59"), epoch).index, 0);
    EXPECT_EQ(hh_index(parse_timestamp("2015-01-01T00:30:00"), epoch).index, 1);
}

TEST(HalfHourIndex, YearLagIs17472) {
    const Date epoch = make_date(2015, 1, 1);
    EXPECT_EQ(hh_index({epoch + std::chrono::days{364}, 0}, epoch).index, 17472);
    EXPECT_EQ(kYearLagSlots, 17472);
}

TEST(HalfHourIndex, PreEpochIsAnError) {
    const Date epoch = make_date(2015, 1, 2);
    EXPECT_THROW(hh_index(parse_timestamp("2015-01-01T23:59:59"), epoch), Error);
}

TEST(HalfHourIndex, SlotOfDay) {
    EXPECT_EQ(slot_of_day(HalfHourIndex{0}), 0);
    EXPECT_EQ(slot_of_day(HalfHourIndex{49}), 1);
    EXPECT_EQ(slot_of_day(HalfHourIndex{17472}), 0);
}

TEST(HalfHourIndex, MonotoneRoundTripAndLagProperty) {
    const Date epoch = make_date(2016, 2, 20);  // spans a leap day
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> day(364, 900), sec(0, kDaySeconds - 1);
    for (int k = 0; k < 2000; ++k) {
        Timestamp t{epoch + std::chrono::days{day(rng)}, sec(rng)};
        auto h = hh_index(t, epoch);
        // Round trip through (day offset, slot).
        EXPECT_EQ(hh_index(slot_start(h, epoch), epoch), h);
        // 52-week lag.
        Timestamp back{t.day - std::chrono::days{364}, t.seconds};
        EXPECT_EQ(h.index - hh_index(back, epoch).index, kYearLagSlots);
        // Monotone.
        auto later = add_seconds(t, 1);
        EXPECT_GE(hh_index(later, epoch).index, h.index);
        EXPECT_LE(hh_index(later, epoch).index - h.index, 1);
    }
}

TEST(Timestamps, ParseAndFormat) {
    auto t = parse_timestamp("2017-03-04T08:10:05");
    EXPECT_EQ(format_timestamp(t), "2017-03-04T08:10:05");
    EXPECT_EQ(parse_timestamp("2017-03-04 08:10:05"), t);
    EXPECT_THROW(parse_timestamp("2017-03-04T25:00:00"), ValidationError);
    EXPECT_THROW(parse_date("2017-02-30"), ValidationError);
    EXPECT_EQ(seconds_between(parse_timestamp("2017-03-04T23:50:00"), parse_timestamp("2017-03-05T00:20:00")), 1800);
}

TEST(DayContext, CalendarFields) {
    const Date epoch = make_date(2015, 1, 1);  // Thursday
    auto ctx = make_day_context(make_date(2015, 1, 15), epoch, {}, {});
    EXPECT_EQ(ctx.day_of_week, Weekday::Thu);
    EXPECT_EQ(ctx.week_index, 2);
    EXPECT_EQ(ctx.month, 1);
    EXPECT_EQ(ctx.day_of_month, 15);
    EXPECT_EQ(day_type(ctx), DayType::Working);
    ctx.is_public_holiday = true;
    EXPECT_EQ(day_type(ctx), DayType::Sunday);
    EXPECT_EQ(day_type(make_day_context(make_date(2015, 1, 17), epoch, {}, {})), DayType::Saturday);
}

TEST(ValidateLayout, AcceptsConsistentLayout) { EXPECT_TRUE(validate_layout(tiny_layout(3)).empty()); }

TEST(ValidateLayout, StockAboveCapacity) {
    auto l = tiny_layout(3);
    l.stations[1].initial_stock = 11;
    auto v = validate_layout(l);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_NE(v[0].find("stock exceeds capacity at station 1"), std::string::npos);
}

TEST(ValidateLayout, MissingDepotRow) {
    auto l = tiny_layout(3);
    l.graph = TravelGraph(3);
    auto v = validate_layout(l);
    ASSERT_FALSE(v.empty());
    EXPECT_NE(v[0].find("graph dimension"), std::string::npos);
}

TEST(ValidateLayout, NegativeTravelTime) {
    auto l = tiny_layout(2);
    l.graph.set(0, 1, -5, 100);
    auto v = validate_layout(l);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_NE(v[0].find("negative travel time"), std::string::npos);
}
