// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <boost/math/distributions/students_t.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "bss/experiments.hpp"

using namespace bss;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes.
constexpr double kGapTol = 0.05;
constexpr double kCmGapTol = 0.01;
constexpr double kFloorTol = 0.05;
constexpr double kMseRelTol = 1e-12;
constexpr int kMsePairs = 1000;
constexpr double kLossSlack = 1e-12;  // relative to the initial training MSE
constexpr double kSlotModelMaxMse = 0.05;
constexpr double kConfidence = 0.95;
constexpr int kCampaignDays = 30;
constexpr int kCampaignStations = 20;
constexpr double kDegradeSigma = 2.0;

const std::string kGolden = std::string(BSS_TEST_DATA) + "/golden/";

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << title << " | " << o.detail << " ("
              << csv::fixed(secs, 1) << " s)" << std::endl;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// One-sided paired check of "a <= b": fails only when mean(a - b) exceeds
// t(confidence, n-1) times its standard error.
struct Paired {
    double mean_diff = 0;
    double se = 0;
    double bound = 0;
    bool pass = true;
};

Paired paired_not_worse(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    Paired p;
    std::vector<double> d(n);
    for (std::size_t k = 0; k < n; ++k) d[k] = a[k] - b[k];
    for (double x : d) p.mean_diff += x;
    p.mean_diff /= n;
    double var = 0;
    for (double x : d) var += (x - p.mean_diff) * (x - p.mean_diff);
    var /= n - 1;
    p.se = std::sqrt(var / n);
    boost::math::students_t dist(double(n - 1));
    p.bound = boost::math::quantile(dist, kConfidence) * p.se;
    p.pass = p.mean_diff <= p.bound;
    return p;
}

std::vector<double> totals(const std::vector<DayKpi>& days) {
    std::vector<double> v;
    for (const auto& d : days) v.push_back(double(d.counters.total_missed()));
    return v;
}

// ---------------------------------------------------------------------------

Outcome gap_formulas() {
    double a = pct_gap(2.023, 1.067), b = pct_gap(2.115, 1.067);
    double c = gap_from_reference(99.54, 105.25);
    double f = improvement_net_of_floor(99.54, 105.25, 62.21);
    bool ok = std::abs(a - 89.60) <= kGapTol && std::abs(b - 98.22) <= kGapTol && std::abs(c - (-5.43)) <= kCmGapTol &&
              std::abs(f - 13.27) <= kFloorTol;
    return {ok, "gap " + csv::fixed(a, 3) + ", " + csv::fixed(b, 3) + "; from CM " + csv::fixed(c, 3) +
                    "; net of floor " + csv::fixed(f, 3) + "%"};
}

Outcome mse_oracle() {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> n(0, 3);
    std::vector<double> p(kMsePairs), y(kMsePairs);
    for (int k = 0; k < kMsePairs; ++k) {
        p[k] = n(rng) * 10;
        y[k] = n(rng) + 1e3;
    }
    // Two-pass: residual mean first, then the corrected sum of squares plus mean squared.
    double mean_r = 0;
    for (int k = 0; k < kMsePairs; ++k) mean_r += p[k] - y[k];
    mean_r /= kMsePairs;
    double css = 0, comp = 0;
    for (int k = 0; k < kMsePairs; ++k) {
        double r = p[k] - y[k] - mean_r;
        css += r * r;
        comp += r;
    }
    double oracle = (css - comp * comp / kMsePairs) / kMsePairs + mean_r * mean_r;
    double got = mse(p, y);
    double rel = std::abs(got - oracle) / oracle;
    return {rel <= kMseRelTol, "relative difference " + csv::num(rel)};
}

Outcome hs_exact() {
    const int days = 2 * 364;
    std::vector<DayContext> ctx;
    const Date first = make_date(2016, 1, 4);
    for (int k = 0; k < days; ++k) ctx.push_back(make_day_context(first + std::chrono::days{k}, first, {}, {}));
    Dataset d(10, ctx);
    std::mt19937_64 rng(3);
    std::poisson_distribution<int> pois(2.0);
    const std::size_t year = std::size_t(364) * kSlotsPerDay * 10;
    for (std::size_t i = 0; i < year; ++i) {
        d.withdrawals[i] = pois(rng);
        d.returns[i] = pois(rng);
    }
    for (std::size_t i = year; i < d.size(); ++i) {
        d.withdrawals[i] = d.withdrawals[i - year];
        d.returns[i] = d.returns[i - year];
    }
    auto m = fit(parse_model_name("hs"), d, {0}, {});
    std::vector<int> second;
    for (int k = 364; k < days; ++k) second.push_back(k);
    auto e = evaluate(m, d, second);
    return {e.mse == 0.0 && e.excluded == 0, "MSE " + csv::num(e.mse) + " over " + std::to_string(e.n) + " slots"};
}

Outcome tree_oracles() {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> slot(0, kSlotsPerDay - 1), dow(0, 6), month(1, 12), flag(0, 1);
    std::uniform_real_distribution<double> temp(-5, 35), wind(0, 30);
    std::normal_distribution<double> noise(0, 0.1);
    auto g = [](double s) { return 2 * std::sin(2 * 3.141592653589793 * s / kSlotsPerDay) + (s >= 16 && s < 20 ? 1.5 : 0.0); };
    auto draw = [&](int n, std::vector<FeatureVector>& x, std::vector<double>& y) {
        for (int k = 0; k < n; ++k) {
            FeatureVector f;
            f[Feature::SlotOfDay] = slot(rng);
            f[Feature::DayOfWeek] = dow(rng);
            f[Feature::Month] = month(rng);
            f[Feature::AvgTemperature] = temp(rng);
            f[Feature::AvgWindSpeed] = wind(rng);
            f[Feature::Rain] = flag(rng);
            x.push_back(f);
            y.push_back(g(f[Feature::SlotOfDay]) + noise(rng));
        }
    };
    std::vector<FeatureVector> xtr, xte;
    std::vector<double> ytr, yte;
    draw(3000, xtr, ytr);
    draw(200, xte, yte);
    ml::BinnedMatrix m(xtr, ml::all_features());

    // (a)
    ml::EnsembleParams cart;
    cart.kind = ml::EnsembleKind::Cart;
    cart.max_depth = 8;
    auto rf = cart;
    rf.kind = ml::EnsembleKind::RandomForest;
    rf.n_estimators = 1;
    rf.bootstrap = false;
    rf.feature_fraction = 1.0;
    auto c = ml::Ensemble::fit(m, ytr, cart), r = ml::Ensemble::fit(m, ytr, rf);
    int differ = 0;
    for (const auto& x : xte) differ += c.predict(x) != r.predict(x);

    // (b)
    ml::EnsembleParams gb;
    gb.kind = ml::EnsembleKind::GradientBoosting;
    gb.n_estimators = 200;
    gb.max_depth = 4;
    gb.learning_rate = 0.1;
    std::vector<double> curve;
    auto model = ml::Ensemble::fit(m, ytr, gb, &curve);
    int increases = 0;
    for (std::size_t k = 1; k < curve.size(); ++k) increases += curve[k] > curve[k - 1] + kLossSlack * curve.front();

    // (c)
    double se = 0;
    for (std::size_t k = 0; k < xte.size(); ++k) se += (model.predict(xte[k]) - yte[k]) * (model.predict(xte[k]) - yte[k]);
    double test_mse = se / xte.size();
    auto counts = model.split_counts();
    int top = int(std::max_element(counts.begin(), counts.end()) - counts.begin());
    long long total = 0;
    for (auto v : counts) total += v;

    bool ok = differ == 0 && curve.size() == 201 && increases == 0 && test_mse < kSlotModelMaxMse &&
              top == static_cast<int>(Feature::SlotOfDay);
    return {ok, "(a) " + std::to_string(differ) + "/200 predictions differ; (b) " + std::to_string(increases) +
                    " loss increases over 200 stages; (c) test MSE " + csv::fixed(test_mse, 4) + ", top feature " +
                    std::string(kFeatureNames[top]) + " share " + csv::fixed(double(counts[top]) / total, 3)};
}

Outcome golden_trace() {
    auto layout = load_layout(kGolden + "layout.csv", kGolden + "graph_time.csv", kGolden + "graph_distance.csv").layout;
    auto ff = csv::open_in(kGolden + "fleet.csv");
    auto fleet = load_fleet(ff, layout.size());
    auto ev = csv::open_in(kGolden + "scenario.csv");
    auto cx = csv::open_in(kGolden + "context.csv");
    auto sc = read_scenario(ev, cx);
    std::vector<double> zero(std::size_t(layout.size()) * kSlotsPerDay, 0.0);
    auto kpi = simulate_day(layout, fleet, sc, PolicyConfig{}, zero, 0, SimOptions{true});
    std::ostringstream got;
    write_kpi_csv(got, {kpi});
    bool ok = got.str() == slurp(kGolden + "expected_kpi.csv");
    const auto& c = kpi.counters;
    return {ok, "missed W " + std::to_string(c.missed_withdrawals) + ", missed R " + std::to_string(c.missed_returns) +
                    ", relocated " + std::to_string(c.relocated_bikes) + ", km " + csv::fixed(c.total_km, 3)};
}

Outcome conservation() {
    synthetic::CityParams p;
    p.n_stations = kCampaignStations;
    p.seed = 606;
    synthetic::City city(p);
    auto cal = synthetic::make_calendar(make_date(2017, 1, 1), make_date(2017, 12, 31), 17);
    long long violations = 0, events = 0, moved = 0;
    for (int k = 0; k < 100; ++k) {
        const auto& ctx = cal[(k * 3) % cal.size()];
        auto sc = city.sample_day(ctx, synthetic::derive_seed(99, {k}));
        Fleet fleet;
        fleet.vehicles = {Vehicle{0, 14, {7 * 3600, 15 * 3600}, std::nullopt},
                          Vehicle{1, 14, {7 * 3600, 15 * 3600}, std::nullopt},
                          Vehicle{2, 14, {11 * 3600 + 1800, 19 * 3600 + 1800}, std::nullopt}};
        auto fc = scenario_net_demand(sc, p.n_stations);
        if (k % 2) {
            std::mt19937_64 rng(k);
            std::normal_distribution<double> n(0, 3);
            for (auto& v : fc) v += n(rng);
        }
        DaySimulator sim(city.layout(), fleet, sc, PolicyConfig{}.make(), fc, PolicyParams{}, SimOptions{true});
        auto kpi = sim.run();
        violations += sim.invariant_violations();
        events += static_cast<long long>(sc.events.size());
        moved += kpi.counters.relocated_bikes;
    }
    return {violations == 0, std::to_string(violations) + " violations over 100 days, " + std::to_string(events) +
                                 " requests, " + std::to_string(moved) + " bikes relocated"};
}

exp::ExperimentConfig small_config(const fs::path& out) {
    std::istringstream in(R"(
seed = 77
[synthetic]
n_stations = 8
first_year = 2016
years = 2
[split]
train = [2016]
test = [2017]
[models]
names = ["hs", "cm", "gb-local"]
[tuning]
n_estimators = [20]
max_depth = [4]
learning_rate = [0.1]
subsample_fraction = [0.8]
feature_fraction = [0.8]
[simulate]
models = ["cm", "gb-local"]
max_days = 14
scenarios = "sampled"
[sweep]
max_fleet = 2
models = ["gb-local"]
)");
    auto c = exp::parse_config(config::Document::parse(in, "determinism.toml"));
    c.out_dir = out.string();
    return c;
}

Outcome determinism() {
    auto root = fs::temp_directory_path() / "bss_acceptance_determinism";
    fs::remove_all(root);
    std::vector<std::string> mismatched;
    for (int run = 0; run < 2; ++run) {
        auto c = small_config(root / std::to_string(run));
        c.jobs = run == 0 ? 1 : 2;
        exp::cmd_eval_forecast(c);
        exp::cmd_simulate(c);
        exp::cmd_fleet_sweep(c);
    }
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(root / "0")) {
        if (!e.is_regular_file()) continue;
        auto rel = fs::relative(e.path(), root / "0");
        ++compared;
        if (slurp(e.path()) != slurp(root / "1" / rel)) mismatched.push_back(rel.string());
    }
    std::string detail = std::to_string(compared) + " files compared (jobs 1 vs 2)";
    if (!mismatched.empty()) detail += ", first mismatch " + mismatched.front();
    return {mismatched.empty() && compared > 0, detail};
}

// Shared synthetic campaign for the policy-ordering criteria.
struct CampaignFixture {
    exp::ExperimentConfig cfg;
    exp::Inputs in;
    exp::Campaign campaign;
    std::map<std::string, ForecastTable> tables;
};

CampaignFixture& campaign_fixture() {
    static CampaignFixture f = [] {
        CampaignFixture x;
        std::istringstream in(R"(
seed = 2018
[synthetic]
n_stations = 20
first_year = 2016
years = 2
[split]
train = [2016]
test = [2017]
[tuning]
n_estimators = [100]
max_depth = [6]
learning_rate = [0.1]
subsample_fraction = [1.0]
feature_fraction = [1.0]
[simulate]
scenarios = "synthetic"
)");
        x.cfg = exp::parse_config(config::Document::parse(in, "campaign.toml"));
        x.in = exp::load_inputs(x.cfg);
        auto all = exp::build_campaign(x.cfg, x.in);
        // Thirty relocation days spread over the test year.
        std::vector<std::size_t> eligible;
        for (std::size_t k = 0; k < all.days.size(); ++k)
            if (day_type(x.in.dataset.days[all.days[k]]) != DayType::Sunday) eligible.push_back(k);
        for (int j = 0; j < kCampaignDays; ++j) {
            auto k = eligible[j * eligible.size() / kCampaignDays];
            x.campaign.days.push_back(all.days[k]);
            x.campaign.scenarios.push_back(all.scenarios[k]);
        }
        x.tables = exp::forecast_tables(x.cfg, x.in.dataset, {"hs", "cm", "gb-local"}, x.campaign.days);
        return x;
    }();
    return f;
}

std::string paired_text(const std::string& label, const Paired& p) {
    return label + " diff " + csv::fixed(p.mean_diff, 2) + " (bound " + csv::fixed(p.bound, 2) + ")";
}

Outcome value_ordering() {
    auto& f = campaign_fixture();
    const auto& c = f.cfg;
    std::vector<exp::RunSpec> runs = exp::model_runs(c, {"hs", "cm", "gb-local"}, f.tables);
    runs.push_back({"perfect-information", PolicyKind::TargetBand, c.fleet.morning, c.fleet.afternoon, true, nullptr});
    runs.push_back({"zero-vehicle", PolicyKind::None, 0, 0, false, nullptr});
    auto res = exp::run_campaign(c, f.in, f.campaign, runs);
    auto pi = totals(res[3]), zero = totals(res[4]);
    bool ok = true;
    std::string detail = "means:";
    for (std::size_t i = 0; i < runs.size(); ++i) detail += " " + runs[i].name + " " + csv::fixed(exp::mean_total_missed(res[i]), 2);
    std::vector<std::string> failed;
    for (int i = 0; i < 3; ++i) {
        auto a = paired_not_worse(pi, totals(res[i]));
        auto b = paired_not_worse(totals(res[i]), zero);
        if (!a.pass) failed.push_back(paired_text("PI<=" + runs[i].name, a));
        if (!b.pass) failed.push_back(paired_text(runs[i].name + "<=zero", b));
        ok = ok && a.pass && b.pass;
    }

    // Fleet sweep with the boosted local forecaster.
    std::vector<exp::RunSpec> cells;
    const int max_fleet = 4;
    for (int m = 0; m <= max_fleet; ++m)
        for (int a = 0; m + a <= max_fleet; ++a)
            cells.push_back({std::to_string(m) + "-" + std::to_string(a), m + a == 0 ? PolicyKind::None : PolicyKind::TargetBand,
                             m, a, false, &f.tables.at("gb-local")});
    auto sweep = exp::run_campaign(c, f.in, f.campaign, cells);
    std::map<std::pair<int, int>, std::vector<double>> cell;
    for (std::size_t i = 0; i < cells.size(); ++i) cell[{cells[i].morning, cells[i].afternoon}] = totals(sweep[i]);
    int checks = 0, worst_violations = 0;
    for (const auto& [k, v] : cell) {
        for (auto next : {std::pair{k.first + 1, k.second}, std::pair{k.first, k.second + 1}}) {
            if (!cell.count(next)) continue;
            ++checks;
            auto p = paired_not_worse(cell.at(next), v);
            if (!p.pass) {
                ++worst_violations;
                failed.push_back(paired_text("sweep " + std::to_string(next.first) + "-" + std::to_string(next.second) +
                                                 "<=" + std::to_string(k.first) + "-" + std::to_string(k.second),
                                             p));
            }
        }
    }
    ok = ok && worst_violations == 0;
    detail += "; " + std::to_string(checks) + " sweep comparisons, " + std::to_string(worst_violations) + " significant increases";
    for (const auto& s : failed) detail += "; " + s;
    return {ok, detail};
}

Outcome forecast_transfer() {
    auto& f = campaign_fixture();
    const auto& c = f.cfg;
    const auto& good = f.tables.at("gb-local");
    ForecastTable noisy(good.n_stations(), good.n_half_hours());
    std::mt19937_64 rng(synthetic::derive_seed(c.seed, {90}));
    std::normal_distribution<double> noise(0.0, kDegradeSigma);
    for (int day : f.campaign.days)
        for (int slot = 0; slot < kSlotsPerDay; ++slot)
            for (StationId s = 0; s < good.n_stations(); ++s) {
                std::int64_t h = std::int64_t(day) * kSlotsPerDay + slot;
                noisy.set(s, h, good.at(s, h) + noise(rng));
            }
    std::vector<exp::RunSpec> runs{
        {"gb-local", PolicyKind::TargetBand, c.fleet.morning, c.fleet.afternoon, false, &good},
        {"degraded", PolicyKind::TargetBand, c.fleet.morning, c.fleet.afternoon, false, &noisy}};
    auto res = exp::run_campaign(c, f.in, f.campaign, runs);
    auto p = paired_not_worse(totals(res[0]), totals(res[1]));
    return {p.pass, "gb-local " + csv::fixed(exp::mean_total_missed(res[0]), 2) + ", degraded " +
                        csv::fixed(exp::mean_total_missed(res[1]), 2) + "; " + paired_text("gb<=degraded", p)};
}

}  // namespace

int main() {
    report(1, "gap formulas", gap_formulas);
    report(2, "MSE matches two-pass oracle", mse_oracle);
    report(3, "historical shifted exact on periodic data", hs_exact);
    report(4, "tree oracles", tree_oracles);
    report(5, "simulator golden trace", golden_trace);
    report(6, "conservation and capacity safety", conservation);
    report(7, "determinism", determinism);
    report(8, "relocation value ordering", value_ordering);
    report(9, "forecast quality transfers to service", forecast_transfer);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures;
}
