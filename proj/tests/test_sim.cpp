#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "bss/data_pipeline.hpp"
#include "bss/sim.hpp"
#include "bss/synthetic.hpp"

using namespace bss;

namespace {

const std::string kGolden = std::string(BSS_TEST_DATA) + "/golden/";

Layout two_stations(int cap0, int stock0, int cap1, int stock1, double t01 = 300) {
    Layout l;
    l.stations = {Station{0, cap0, stock0, 0, 0, 0}, Station{1, cap1, stock1, 0, 0, 0}};
    l.graph = TravelGraph(3);
    l.graph.set(0, 1, t01, 2000);
    l.graph.set(1, 0, t01, 2000);
    for (int k = 0; k < 2; ++k) {
        l.graph.set(k, 2, 600, 3000);
        l.graph.set(2, k, 600, 3000);
    }
    return l;
}

Scenario scenario_of(std::vector<TripEvent> ev) {
    Scenario sc{make_day_context(make_date(2017, 5, 3), make_date(2017, 1, 1), {}, {}), std::move(ev)};
    sort_events(sc.events);
    return sc;
}

std::vector<double> zeros(int n) { return std::vector<double>(std::size_t(n) * kSlotsPerDay, 0.0); }

PolicyConfig no_relocation() { return PolicyConfig{PolicyKind::None, {}}; }

/// Issues a fixed list of tasks to vehicle 0, one per replan.
class ScriptedPolicy final : public RelocationPolicy {
public:
    explicit ScriptedPolicy(std::vector<VehicleTask> tasks) : tasks_(std::move(tasks)) {}
    void begin_day(const Layout&, std::span<const double>) override {}
    void on_slot_boundary(const SimState&, const Layout&, int) override {}
    std::optional<VehicleTask> plan(const SimState&, const Layout&, const Fleet&, int) override {
        if (next_ >= tasks_.size()) return std::nullopt;
        return tasks_[next_++];
    }
    std::size_t next_ = 0;

private:
    std::vector<VehicleTask> tasks_;
};

struct GoldenCase {
    Layout layout;
    Fleet fleet;
    Scenario scenario;
};

GoldenCase load_golden() {
    GoldenCase g;
    g.layout = load_layout(kGolden + "layout.csv", kGolden + "graph_time.csv", kGolden + "graph_distance.csv").layout;
    auto f = csv::open_in(kGolden + "fleet.csv");
    g.fleet = load_fleet(f, g.layout.size());
    auto ev = csv::open_in(kGolden + "scenario.csv");
    auto cx = csv::open_in(kGolden + "context.csv");
    g.scenario = read_scenario(ev, cx);
    return g;
}

}  // namespace

TEST(Golden, HandEnumeratedTrace) {
    auto g = load_golden();
    DaySimulator sim(g.layout, g.fleet, g.scenario, PolicyConfig{}.make(), zeros(2), PolicyParams{}, {true});
    auto kpi = sim.run();
    std::ostringstream got;
    write_kpi_csv(got, {kpi});
    std::ifstream want_file(kGolden + "expected_kpi.csv");
    std::stringstream want;
    want << want_file.rdbuf();
    EXPECT_EQ(got.str(), want.str());
    EXPECT_EQ(sim.state().stock, (std::vector<int>{2, 3}));
    EXPECT_EQ(sim.invariant_violations(), 0);
    EXPECT_EQ(sim.state().vehicles[0].status, VehicleStatus::Done);
}

TEST(Simulate, EmptyScenarioNoVehicles) {
    auto l = two_stations(4, 2, 4, 2);
    auto k = simulate_day(l, Fleet{}, scenario_of({}), PolicyConfig{}, zeros(2));
    EXPECT_EQ(k.counters, KpiCounters{});
}

TEST(Simulate, WithdrawalAtEmptyStationIsMissed) {
    Layout l;
    l.stations = {Station{0, 2, 0, 0, 0, 0}};
    l.graph = TravelGraph(2);
    l.graph.set(0, 1, 60, 100);
    l.graph.set(1, 0, 60, 100);
    auto k = simulate_day(l, Fleet{}, scenario_of({{1000, 0, 0, 300}}), PolicyConfig{}, zeros(1));
    EXPECT_EQ(k.counters.missed_withdrawals, 1);
    EXPECT_EQ(k.counters.missed_returns, 0);
}

TEST(Simulate, WithdrawalSchedulesReturn) {
    auto l = two_stations(4, 3, 4, 0);
    auto sc = scenario_of({{1000, 0, 1, 300}});
    DaySimulator sim(l, Fleet{}, sc, no_relocation().make(), zeros(2), {});
    while (sim.step())
        if (sim.last_event()->kind == EventKind::WithdrawalRequest) break;
    EXPECT_EQ(sim.state().stock[0], 2);
    EXPECT_EQ(sim.state().bikes_in_transit, 1);
    sim.step();
    EXPECT_EQ(sim.last_event()->kind, EventKind::ReturnArrival);
    EXPECT_EQ(sim.last_event()->time, 1300);
    EXPECT_EQ(sim.state().stock[1], 1);
}

TEST(Simulate, SimultaneousRequestsOneServed) {
    auto l = two_stations(4, 1, 4, 0);
    auto k = simulate_day(l, Fleet{}, scenario_of({{500, 0, 1, 60}, {500, 0, 1, 90}}), no_relocation(), zeros(2));
    EXPECT_EQ(k.counters.missed_withdrawals, 1);
}

TEST(Simulate, FullStationRedirectsToNeighbour) {
    auto l = two_stations(2, 1, 2, 2, 450);
    auto sc = scenario_of({{100, 0, 1, 200}});
    DaySimulator sim(l, Fleet{}, sc, no_relocation().make(), zeros(2), {}, {true});
    sim.run();
    EXPECT_EQ(sim.kpi().counters.missed_returns, 1);
    EXPECT_EQ(sim.state().stock, (std::vector<int>{1, 2}));
    EXPECT_EQ(sim.invariant_violations(), 0);
}

TEST(Simulate, RedirectArrivesAfterTravelTime) {
    auto l = two_stations(2, 1, 2, 2, 450);
    auto sc = scenario_of({{100, 0, 1, 200}});
    DaySimulator sim(l, Fleet{}, sc, no_relocation().make(), zeros(2), {});
    std::vector<std::int64_t> returns;
    while (sim.step())
        if (sim.last_event()->kind == EventKind::ReturnArrival) returns.push_back(sim.last_event()->time);
    EXPECT_EQ(returns, (std::vector<std::int64_t>{300, 750}));
}

TEST(Simulate, RedirectFindingAnotherFullStationCountsAgain) {
    Layout l;
    l.stations = {Station{0, 1, 0, 0, 0, 0}, Station{1, 1, 1, 0, 0, 0}, Station{2, 3, 2, 0, 0, 0}};
    l.graph = TravelGraph(4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) l.graph.set(i, j, (i + j == 1) ? 100 : 1000, 1000);
    // 200: bike A finds 1 full and heads to 0; 250: bike B fills 0; 300: A is turned away again.
    auto sc = scenario_of({{100, 2, 1, 100}, {150, 2, 0, 100}});
    DaySimulator sim(l, Fleet{}, sc, no_relocation().make(), zeros(3), {}, {true});
    std::vector<std::int64_t> returns;
    while (sim.step())
        if (sim.last_event()->kind == EventKind::ReturnArrival) returns.push_back(sim.last_event()->time);
    EXPECT_EQ(returns, (std::vector<std::int64_t>{200, 250, 300, 1300}));
    EXPECT_EQ(sim.kpi().counters.missed_returns, 2);
    EXPECT_EQ(sim.state().stock, (std::vector<int>{1, 1, 1}));
    EXPECT_EQ(sim.invariant_violations(), 0);
}

TEST(Simulate, ClippedServiceMovesOnlyWhatFits) {
    auto l = two_stations(4, 3, 8, 8);
    Fleet f;
    f.vehicles.push_back(Vehicle{0, 14, Shift{0, 3600}, StationId{1}});
    auto policy = std::make_unique<ScriptedPolicy>(std::vector<VehicleTask>{
        {0, 1, TaskAction::Pickup, 5, 0}, {0, 0, TaskAction::Drop, 4, 0}});
    auto* raw = policy.get();
    auto sc = scenario_of({});
    DaySimulator sim(l, f, sc, std::move(policy), zeros(2), {}, {true});
    sim.run();
    EXPECT_EQ(sim.state().stock, (std::vector<int>{4, 3}));
    EXPECT_EQ(sim.kpi().counters.relocated_bikes, 6);  // 5 loaded, 1 unloaded
    EXPECT_EQ(raw->next_, 2u);
    EXPECT_EQ(sim.state().depot_stock, 4);  // leftover load returned at shift end
    EXPECT_EQ(sim.invariant_violations(), 0);
}

TEST(Simulate, ZeroMoveExcludesStation) {
    auto l = two_stations(4, 0, 4, 4);
    Fleet f;
    f.vehicles.push_back(Vehicle{0, 14, Shift{0, 3600}, std::nullopt});
    auto sc = scenario_of({});
    DaySimulator sim(l, f, sc, std::make_unique<ScriptedPolicy>(std::vector<VehicleTask>{{0, 0, TaskAction::Pickup, 2, 0}}),
                     zeros(2), {});
    while (sim.step())
        if (sim.last_event()->kind == EventKind::VehicleArrival) break;
    EXPECT_EQ(sim.state().vehicles[0].excluded_station, 0);
    EXPECT_EQ(sim.state().vehicles[0].excluded_until, sim.state().clock + kSlotSeconds);
}

TEST(Simulate, CoverageGapFailsBeforeStart) {
    auto l = two_stations(4, 2, 4, 2);
    auto fc = zeros(2);
    fc[10] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(simulate_day(l, Fleet{}, scenario_of({}), PolicyConfig{}, fc), Error);
    EXPECT_THROW(simulate_day(l, Fleet{}, scenario_of({}), PolicyConfig{}, std::vector<double>(5)), Error);
}

TEST(Simulate, ConservationDeterminismAndPerSlotSums) {
    synthetic::CityParams p;
    synthetic::City city(p);
    Fleet f;
    f.vehicles = {Vehicle{0, 14, Shift{25200, 54000}, std::nullopt}, Vehicle{1, 14, Shift{41400, 70200}, std::nullopt},
                  Vehicle{2, 14, Shift{25200, 54000}, std::nullopt}};
    auto cal = synthetic::make_calendar(make_date(2018, 3, 1), make_date(2018, 3, 10), 1);
    for (const auto& ctx : cal) {
        auto sc = city.sample_day(ctx, synthetic::derive_seed(3, {ctx.date.time_since_epoch().count()}));
        auto fc = scenario_net_demand(sc, p.n_stations);
        DaySimulator a(city.layout(), f, sc, PolicyConfig{}.make(), fc, {}, {true});
        auto ka = a.run();
        EXPECT_EQ(a.invariant_violations(), 0);
        auto kb = simulate_day(city.layout(), f, sc, PolicyConfig{}, fc);
        EXPECT_EQ(ka.counters, kb.counters);
        KpiCounters sum;
        for (const auto& s : ka.per_slot) sum += s;
        EXPECT_EQ(sum.missed_withdrawals, ka.counters.missed_withdrawals);
        EXPECT_EQ(sum.missed_returns, ka.counters.missed_returns);
        EXPECT_EQ(sum.relocated_bikes, ka.counters.relocated_bikes);
        EXPECT_NEAR(sum.total_km, ka.counters.total_km, 1e-9);
    }
}

TEST(Simulate, IdleFleetMatchesZeroVehicleBaseline) {
    synthetic::CityParams p;
    synthetic::City city(p);
    Fleet f;
    f.vehicles = {Vehicle{0, 14, Shift{25200, 54000}, std::nullopt}};
    auto cal = synthetic::make_calendar(make_date(2018, 6, 4), make_date(2018, 6, 8), 1);
    for (const auto& ctx : cal) {
        auto sc = city.sample_day(ctx, 77);
        auto none = simulate_day(city.layout(), Fleet{}, sc, PolicyConfig{}, zeros(p.n_stations));
        auto idle = simulate_day(city.layout(), f, sc, no_relocation(), zeros(p.n_stations));
        EXPECT_EQ(none.counters, idle.counters);
    }
}

TEST(Simulate, RelocationNeverHurtsUnderIdealResources) {
    std::mt19937_64 rng(21);
    int worse = 0, trials = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 3 + int(rng() % 3);
        Layout l;
        for (int k = 0; k < n; ++k) {
            int cap = 3 + int(rng() % 6);
            l.stations.push_back(Station{k, cap, int(rng() % (cap + 1)), 0, 0, 0});
        }
        l.graph = TravelGraph(n + 1);
        Fleet f;
        for (int k = 0; k < n; ++k) f.vehicles.push_back(Vehicle{k, 1000, Shift{0, kDaySeconds}, std::nullopt});
        // Requests on slot boundaries so every slot's net demand is realised at once.
        std::vector<TripEvent> ev;
        for (int e = 0; e < 30; ++e) {
            int slot = 14 + int(rng() % 24);
            ev.push_back({slot * kSlotSeconds, int(rng() % n), int(rng() % n), kSlotSeconds * (1 + int(rng() % 2))});
        }
        auto sc = scenario_of(ev);
        auto fc = scenario_net_demand(sc, n);
        PolicyConfig policy{PolicyKind::TargetBand, PolicyParams{4, 1, 0}};
        auto with = simulate_day(l, f, sc, policy, fc);
        auto without = simulate_day(l, Fleet{}, sc, policy, fc);
        ++trials;
        if (with.counters.total_missed() > without.counters.total_missed()) ++worse;
    }
    EXPECT_EQ(worse, 0) << "of " << trials;
}

TEST(Aggregate, MeansGroupsAndRelocationDays) {
    auto day = [](Date d, int missed) {
        DayKpi k;
        k.date_ctx = make_day_context(d, make_date(2018, 1, 1), {}, {});
        k.counters.missed_withdrawals = missed;
        return k;
    };
    std::vector<DayKpi> days = {day(make_date(2018, 1, 8), 10), day(make_date(2018, 1, 15), 20)};
    auto all = aggregate_kpis(days, Grouping::None);
    ASSERT_EQ(all.size(), 1u);
    EXPECT_DOUBLE_EQ(all[0].total_missed.mean, 15.0);
    EXPECT_EQ(aggregate_kpis(days, Grouping::DayOfWeek).size(), 1u);
    EXPECT_EQ(aggregate_kpis(days, Grouping::DayOfWeek)[0].group, "Mon");

    days.push_back(day(make_date(2018, 1, 14), 100));  // Sunday
    EXPECT_DOUBLE_EQ(aggregate_kpis(days, Grouping::None, true)[0].total_missed.mean, 15.0);
    EXPECT_EQ(aggregate_kpis(days, Grouping::Month).size(), 1u);
    EXPECT_THROW(aggregate_kpis({}, Grouping::None), Error);
}

TEST(Aggregate, GapFromReferenceRun) {
    EXPECT_NEAR(100.0 * (99.54 - 105.25) / 105.25, -5.425, 1e-3);
}

TEST(KpiCsv, TotalsAndPerSlotColumns) {
    DayKpi k;
    k.date_ctx = make_day_context(make_date(2018, 2, 1), make_date(2018, 1, 1), {}, {});
    k.counters = {3, 4, 1.5, 7};
    k.per_slot[5] = {3, 4, 1.5, 7};
    std::ostringstream out;
    write_kpi_csv(out, {k}, true);
    auto text = out.str();
    EXPECT_NE(text.find("2018-02-01,3,4,7,1.500,7"), std::string::npos);
    EXPECT_NE(text.find("missed_s47"), std::string::npos);
}
