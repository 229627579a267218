#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "bss/scenario.hpp"
#include "bss/synthetic.hpp"

using namespace bss;

namespace {

DayContext ctx_on(Date d) { return make_day_context(d, d, {}, {}); }

ODModel self_loop_model(int n) {
    ODModel od(n, 8);
    for (int o = 0; o < n; ++o)
        for (int b = 0; b < 8; ++b) {
            std::vector<double> w(n, 0.0);
            w[o] = 1.0;
            od.set_cell(o, b, w, {600.0});
        }
    return od;
}

}  // namespace

TEST(Replay, OneEventPerTripOnTheDay) {
    const Date day = make_date(2016, 5, 10);
    std::vector<TripRecord> trips = {
        {parse_timestamp("2016-05-10T08:00:00"), 0, parse_timestamp("2016-05-10T08:20:00"), 1},
        {parse_timestamp("2016-05-10T23:50:00"), 1, parse_timestamp("2016-05-11T00:10:00"), 0},
        {parse_timestamp("2016-05-11T08:00:00"), 0, parse_timestamp("2016-05-11T08:20:00"), 1},
    };
    auto sc = replay_scenario(trips, day, ctx_on(day));
    ASSERT_EQ(sc.events.size(), 2u);
    EXPECT_EQ(sc.events[0], (TripEvent{28800, 0, 1, 1200}));
    EXPECT_EQ(sc.events[1], (TripEvent{85800, 1, 0, 1200}));  // overnight keeps its duration
}

TEST(Replay, RoundTripThroughTrips) {
    const Date day = make_date(2016, 5, 10);
    Scenario sc{ctx_on(day), {{100, 0, 1, 50}, {3000, 2, 2, 800}, {86000, 1, 0, 900}}};
    auto back = replay_scenario(scenario_trips(sc), day, sc.date_ctx);
    EXPECT_EQ(back.events, sc.events);
}

TEST(RateProfile, MeansPerClassSlotStation) {
    const Date first = make_date(2016, 5, 2);  // Monday
    std::vector<DayContext> days;
    for (int k = 0; k < 2; ++k) days.push_back(make_day_context(first + std::chrono::days{k}, first, {}, {}));
    std::vector<TripRecord> trips = {
        {parse_timestamp("2016-05-02T08:05:00"), 0, parse_timestamp("2016-05-02T08:10:00"), 1},
        {parse_timestamp("2016-05-02T08:06:00"), 0, parse_timestamp("2016-05-02T08:12:00"), 1},
        {parse_timestamp("2016-05-03T08:05:00"), 0, parse_timestamp("2016-05-03T08:10:00"), 1},
    };
    auto d = aggregate(trips, 2, days);
    auto r = fit_rates(d);
    EXPECT_DOUBLE_EQ(r.lambda_w(days[0], 16, 0), 1.5);
    EXPECT_DOUBLE_EQ(r.lambda_r(days[0], 16, 1), 1.5);
    EXPECT_DOUBLE_EQ(r.lambda_w(days[0], 17, 0), 0.0);
}

TEST(Sampling, ZeroRatesGiveEmptyScenario) {
    auto ev = sample_events(3, [](int, StationId) { return 0.0; }, self_loop_model(3), 1);
    EXPECT_TRUE(ev.empty());
}

TEST(Sampling, SameSeedSameScenario) {
    auto od = self_loop_model(4);
    auto rate = [](int slot, StationId s) { return 0.5 + 0.1 * s + 0.01 * slot; };
    EXPECT_EQ(sample_events(4, rate, od, 99), sample_events(4, rate, od, 99));
    EXPECT_NE(sample_events(4, rate, od, 99), sample_events(4, rate, od, 100));
}

TEST(Sampling, PoissonMeanWithinThreeStandardErrors) {
    // lambda = 4 per slot at one station: 192 expected events per day.
    auto od = self_loop_model(1);
    const int runs = 200;
    double sum = 0;
    for (int seed = 0; seed < runs; ++seed) sum += double(sample_events(1, [](int, StationId) { return 4.0; }, od, seed).size());
    const double mean = sum / runs;
    const double se = std::sqrt(192.0 / runs);
    EXPECT_NEAR(mean, 192.0, 3 * se);
}

TEST(Sampling, EventsAreSortedAndInsideTheirSlots) {
    auto od = self_loop_model(2);
    auto ev = sample_events(2, [](int slot, StationId) { return slot == 10 ? 3.0 : 0.0; }, od, 3);
    for (std::size_t k = 0; k < ev.size(); ++k) {
        EXPECT_EQ(ev[k].request_time / kSlotSeconds, 10);
        EXPECT_EQ(ev[k].destination, ev[k].origin);
        if (k) EXPECT_LE(ev[k - 1].request_time, ev[k].request_time);
    }
}

TEST(ODModel, FitsDestinationsAndFallsBack) {
    std::vector<TripRecord> trips;
    for (int k = 0; k < 3; ++k)
        trips.push_back({parse_timestamp("2016-05-02T08:05:00"), 0, parse_timestamp("2016-05-02T08:15:00"), 1});
    trips.push_back({parse_timestamp("2016-05-02T08:05:00"), 0, parse_timestamp("2016-05-02T08:15:00"), 2});
    auto od = ODModel::fit(trips, 3);
    const int band = od.band_of(16);
    EXPECT_DOUBLE_EQ(od.probability(0, band, 1), 0.75);
    EXPECT_DOUBLE_EQ(od.probability(0, band, 2), 0.25);
    // Other bands of station 0 reuse its pooled pattern; other origins use the global one.
    EXPECT_DOUBLE_EQ(od.probability(0, 0, 1), 0.75);
    EXPECT_DOUBLE_EQ(od.probability(2, 0, 1), 0.75);
    std::mt19937_64 rng(1);
    for (int k = 0; k < 50; ++k) EXPECT_EQ(od.sample_duration(0, 16, rng), 600);
}

TEST(ScenarioFiles, RoundTrip) {
    WeatherDay w{21.5, 8.25, false, true, false, false};
    auto ctx = make_day_context(make_date(2018, 7, 4), make_date(2015, 1, 1), w, CalendarDay{false, false});
    Scenario sc{ctx, {{10, 0, 1, 300}, {4000, 1, 0, 77}}};
    std::stringstream ev, cx;
    write_scenario(ev, cx, sc);
    auto back = read_scenario(ev, cx);
    EXPECT_EQ(back.events, sc.events);
    EXPECT_EQ(back.date_ctx.date, ctx.date);
    EXPECT_EQ(back.date_ctx.rain, true);
    EXPECT_DOUBLE_EQ(back.date_ctx.avg_temperature, 21.5);
    EXPECT_EQ(back.date_ctx.week_index, ctx.week_index);
}

TEST(ScenarioFiles, RejectsOutOfRangeTimes) {
    std::stringstream ev("request_time_s,origin,destination,duration_s\n90000,0,0,10\n");
    std::stringstream unused, cx;
    write_scenario(unused, cx, Scenario{ctx_on(make_date(2016, 1, 1)), {}});
    EXPECT_THROW(read_scenario(ev, cx), ValidationError);
}

TEST(SyntheticCity, LayoutIsValidAndDeterministic) {
    synthetic::CityParams p;
    synthetic::City a(p), b(p);
    EXPECT_TRUE(validate_layout(a.layout()).empty());
    EXPECT_EQ(a.layout().graph.time_s, b.layout().graph.time_s);
    auto ctx = make_day_context(make_date(2016, 5, 4), make_date(2016, 1, 1), {}, {false, true});
    EXPECT_EQ(a.sample_day(ctx, 5).events, b.sample_day(ctx, 5).events);
    EXPECT_GT(a.sample_day(ctx, 5).events.size(), 100u);
}

TEST(SyntheticCity, CalendarMarksHolidays) {
    auto cal = synthetic::make_calendar(make_date(2016, 12, 24), make_date(2016, 12, 27), 3);
    ASSERT_EQ(cal.size(), 4u);
    EXPECT_FALSE(cal[0].is_public_holiday);
    EXPECT_TRUE(cal[1].is_public_holiday);
    EXPECT_TRUE(cal[2].is_public_holiday);
    EXPECT_FALSE(cal[3].is_public_holiday);
}
