#pragma once

// Experiment orchestration behind the CLI: dataset build, forecast
// evaluation, simulation campaigns, and fleet sweeps, with their reports.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bss/config.hpp"
#include "bss/core.hpp"
#include "bss/csv.hpp"
#include "bss/data_pipeline.hpp"
#include "bss/forecast.hpp"
#include "bss/parallel.hpp"
#include "bss/relocation.hpp"
#include "bss/scenario.hpp"
#include "bss/sim.hpp"
#include "bss/stats.hpp"
#include "bss/synthetic.hpp"

namespace bss::exp {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

struct FleetConfig {
    int morning = 2;
    int afternoon = 1;
    int capacity = 14;
    Shift morning_shift{7 * 3600, 15 * 3600};
    Shift afternoon_shift{11 * 3600 + 1800, 19 * 3600 + 1800};
    Shift saturday_shift{7 * 3600, 13 * 3600};
    int saturday_vehicles = 1;  // only when the morning shift is staffed
    std::string file;           // explicit fleet.csv used on relocation days instead
};

enum class ScenarioSource : int { Replay = 0, Sampled, Synthetic };

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    int jobs = 1;

    // [data]
    std::string source = "synthetic";
    std::string trips, layout, graph_time, graph_distance, weather, calendar;
    std::string first_day, last_day;

    // [synthetic]
    synthetic::CityParams city;
    bool city_seed_set = false;
    int first_year = 2015;
    int years = 4;

    // [split]
    std::map<int, Role> split;
    std::vector<int> eval_years;

    // [models], [tuning]
    std::vector<std::string> models{"hs", "cm", "cart-global", "cart-local", "rf-global", "rf-local", "gb-global", "gb-local"};
    HyperGrid grid;

    // [fleet], [policy]
    FleetConfig fleet;
    PolicyParams policy;

    // [simulate]
    std::vector<std::string> sim_models{"cm", "gb-local"};
    bool perfect_information = true;
    bool zero_vehicle = true;
    Role sim_role = Role::Test;
    int max_days = 0;  // 0: every day with the role
    ScenarioSource scenarios = ScenarioSource::Replay;
    std::string external_forecast;
    std::string external_name = "external";
    bool per_slot = false;

    // [sweep]
    int max_fleet = 4;
    std::vector<std::string> sweep_models{"gb-local"};

    // [output]
    bool write_inputs = false;
    bool write_models = true;
};

/// Every key the config understands, with its default, for `--help`.
inline constexpr std::string_view kConfigReference = R"(Config keys (TOML subset; relative paths resolve against the config file):
  seed = 1                          master seed (overridden by --seed)
  [data]      source = "synthetic" | "files"
              trips, layout, graph_time, graph_distance, weather, calendar = "<csv path>"
              first_day, last_day = "YYYY-MM-DD"      (default: weather range)
  [synthetic] n_stations = 20, side_m = 4000, demand_scale = 1.0, center_share = 0.35,
              vehicle_speed_mps = 6.0, stop_overhead_s = 60, bike_speed_mps = 4.0,
              seed = <master seed>, first_year = 2015, years = 4
  [split]     train = [..years], validation = [..], test = [..], unused = [..]
              evaluate = [..]                       (default: test years)
              default for synthetic data: first two years train, then validation, then test
  [models]    names = ["hs","cm","cart-global","cart-local","rf-global","rf-local","gb-global","gb-local"]
  [tuning]    n_estimators = [50,100,200], max_depth = [4,6,8], learning_rate = [0.05,0.1],
              subsample_fraction = [0.8,1.0], feature_fraction = [0.8,1.0], min_samples_leaf = [1],
              forest_feature_fraction = 0.5, bootstrap = true
  [fleet]     morning = 2, afternoon = 1, capacity = 14,
              morning_shift = ["07:00","15:00"], afternoon_shift = ["11:30","19:30"],
              saturday_shift = ["07:00","13:00"], saturday_vehicles = 1, file = "<fleet.csv>"
  [policy]    lookahead_slots = 4, deadband_bikes = 2, per_bike_service_s = 30
  [simulate]  models = ["cm","gb-local"], perfect_information = true, zero_vehicle = true,
              days = "test" | "validation" | "train", max_days = 0,
              scenarios = "replay" | "sampled" | "synthetic",
              external_forecast = "<forecast.csv>", external_name = "external", per_slot = false
  [sweep]     max_fleet = 4, models = ["gb-local"]
  [output]    dir = "out", write_inputs = false, write_models = true
)";

namespace detail {

inline Shift shift_of(const config::Document& doc, const std::string& key, Shift fallback) {
    if (!doc.has(key)) return fallback;
    auto v = doc.strings(key, {});
    if (v.size() != 2) throw ValidationError("'" + key + "' must be [\"HH:MM\", \"HH:MM\"]");
    Shift s{config::parse_clock(v[0], key), config::parse_clock(v[1], key)};
    validate_shift(s);
    return s;
}

inline std::vector<std::string> model_list(const config::Document& doc, const std::string& key,
                                           std::vector<std::string> fallback) {
    auto names = doc.strings(key, std::move(fallback));
    std::set<std::string> seen;
    for (const auto& n : names) {
        parse_model_name(n);
        if (!seen.insert(n).second) throw ValidationError("'" + key + "' lists " + n + " twice");
    }
    return names;
}

}  // namespace detail

inline ExperimentConfig parse_config(const config::Document& doc) {
    doc.check_known({"seed",
                     "data.source", "data.trips", "data.layout", "data.graph_time", "data.graph_distance",
                     "data.weather", "data.calendar", "data.first_day", "data.last_day",
                     "synthetic.n_stations", "synthetic.side_m", "synthetic.demand_scale", "synthetic.center_share",
                     "synthetic.vehicle_speed_mps", "synthetic.stop_overhead_s", "synthetic.bike_speed_mps",
                     "synthetic.seed", "synthetic.first_year", "synthetic.years",
                     "split.train", "split.validation", "split.test", "split.unused", "split.evaluate",
                     "models.names",
                     "tuning.n_estimators", "tuning.max_depth", "tuning.learning_rate", "tuning.subsample_fraction",
                     "tuning.feature_fraction", "tuning.min_samples_leaf", "tuning.forest_feature_fraction",
                     "tuning.bootstrap",
                     "fleet.morning", "fleet.afternoon", "fleet.capacity", "fleet.morning_shift",
                     "fleet.afternoon_shift", "fleet.saturday_shift", "fleet.saturday_vehicles", "fleet.file",
                     "policy.lookahead_slots", "policy.deadband_bikes", "policy.per_bike_service_s",
                     "simulate.models", "simulate.perfect_information", "simulate.zero_vehicle", "simulate.days",
                     "simulate.max_days", "simulate.scenarios", "simulate.external_forecast",
                     "simulate.external_name", "simulate.per_slot",
                     "sweep.max_fleet", "sweep.models",
                     "output.dir", "output.write_inputs", "output.write_models"});
    ExperimentConfig c;
    c.seed = static_cast<std::uint64_t>(doc.integer("seed", 1));

    c.source = doc.string("data.source", "synthetic");
    if (c.source != "synthetic" && c.source != "files")
        throw ValidationError("data.source must be \"synthetic\" or \"files\"");
    c.trips = doc.path("data.trips");
    c.layout = doc.path("data.layout");
    c.graph_time = doc.path("data.graph_time");
    c.graph_distance = doc.path("data.graph_distance");
    c.weather = doc.path("data.weather");
    c.calendar = doc.path("data.calendar");
    c.first_day = doc.string("data.first_day", "");
    c.last_day = doc.string("data.last_day", "");
    if (c.source == "files") {
        for (auto [key, v] : {std::pair{"trips", &c.trips}, {"layout", &c.layout}, {"graph_time", &c.graph_time},
                              {"graph_distance", &c.graph_distance}, {"weather", &c.weather}, {"calendar", &c.calendar}}) {
            if (v->empty()) throw ValidationError(std::string("data.") + key + " is required when data.source = \"files\"");
            if (!fs::exists(*v)) throw ValidationError(std::string("data.") + key + ": file not found: " + *v);
        }
    }

    auto& p = c.city;
    p.n_stations = doc.integer("synthetic.n_stations", p.n_stations);
    p.side_m = doc.number("synthetic.side_m", p.side_m);
    p.demand_scale = doc.number("synthetic.demand_scale", p.demand_scale);
    p.center_share = doc.number("synthetic.center_share", p.center_share);
    p.vehicle_speed_mps = doc.number("synthetic.vehicle_speed_mps", p.vehicle_speed_mps);
    p.stop_overhead_s = doc.number("synthetic.stop_overhead_s", p.stop_overhead_s);
    p.bike_speed_mps = doc.number("synthetic.bike_speed_mps", p.bike_speed_mps);
    c.city_seed_set = doc.has("synthetic.seed");
    p.seed = static_cast<std::uint64_t>(doc.integer("synthetic.seed", 0));
    c.first_year = doc.integer("synthetic.first_year", c.first_year);
    c.years = doc.integer("synthetic.years", c.years);
    if (p.n_stations < 1) throw ValidationError("synthetic.n_stations must be at least 1");
    if (c.years < 1) throw ValidationError("synthetic.years must be at least 1");
    if (p.demand_scale < 0) throw ValidationError("synthetic.demand_scale must be non-negative");

    for (auto [key, role] : {std::pair{"split.train", Role::Train}, {"split.validation", Role::Validation},
                             {"split.test", Role::Test}, {"split.unused", Role::Unused}})
        for (int y : doc.integers(key, {})) {
            if (c.split.count(y)) throw ValidationError("year " + std::to_string(y) + " appears twice in [split]");
            c.split[y] = role;
        }
    if (c.split.empty() && c.source == "synthetic") {
        for (int k = 0; k < c.years; ++k) {
            int from_end = c.years - 1 - k;
            c.split[c.first_year + k] = from_end == 0 ? Role::Test : from_end == 1 && c.years > 2 ? Role::Validation : Role::Train;
        }
    }
    if (c.split.empty()) throw ValidationError("[split] must assign every year a role");
    c.eval_years = doc.integers("split.evaluate", {});
    if (c.eval_years.empty())
        for (auto [y, r] : c.split)
            if (r == Role::Test) c.eval_years.push_back(y);

    c.models = detail::model_list(doc, "models.names", c.models);
    if (c.models.empty()) throw ValidationError("models.names must list at least one model");

    auto& g = c.grid;
    g.n_estimators = doc.integers("tuning.n_estimators", g.n_estimators);
    g.max_depth = doc.integers("tuning.max_depth", g.max_depth);
    g.learning_rate = doc.numbers("tuning.learning_rate", g.learning_rate);
    g.subsample_fraction = doc.numbers("tuning.subsample_fraction", g.subsample_fraction);
    g.feature_fraction = doc.numbers("tuning.feature_fraction", g.feature_fraction);
    g.min_samples_leaf = doc.integers("tuning.min_samples_leaf", g.min_samples_leaf);
    g.forest_feature_fraction = doc.number("tuning.forest_feature_fraction", g.forest_feature_fraction);
    g.bootstrap = doc.boolean("tuning.bootstrap", g.bootstrap);
    for (int v : g.n_estimators)
        if (v < 1) throw ValidationError("tuning.n_estimators entries must be at least 1");
    for (int v : g.max_depth)
        if (v < 1) throw ValidationError("tuning.max_depth entries must be at least 1");
    for (double v : g.subsample_fraction)
        if (!(v > 0 && v <= 1)) throw ValidationError("tuning.subsample_fraction entries must be in (0, 1]");
    for (double v : g.feature_fraction)
        if (!(v > 0 && v <= 1)) throw ValidationError("tuning.feature_fraction entries must be in (0, 1]");
    if (!(g.forest_feature_fraction > 0 && g.forest_feature_fraction <= 1))
        throw ValidationError("tuning.forest_feature_fraction must be in (0, 1]");

    auto& f = c.fleet;
    f.morning = doc.integer("fleet.morning", f.morning);
    f.afternoon = doc.integer("fleet.afternoon", f.afternoon);
    f.capacity = doc.integer("fleet.capacity", f.capacity);
    f.morning_shift = detail::shift_of(doc, "fleet.morning_shift", f.morning_shift);
    f.afternoon_shift = detail::shift_of(doc, "fleet.afternoon_shift", f.afternoon_shift);
    f.saturday_shift = detail::shift_of(doc, "fleet.saturday_shift", f.saturday_shift);
    f.saturday_vehicles = doc.integer("fleet.saturday_vehicles", f.saturday_vehicles);
    f.file = doc.path("fleet.file");
    if (f.morning < 0 || f.afternoon < 0 || f.saturday_vehicles < 0)
        throw ValidationError("fleet vehicle counts must be non-negative");
    if (f.capacity < 1) throw ValidationError("fleet.capacity must be at least 1");

    c.policy.lookahead_slots = doc.integer("policy.lookahead_slots", c.policy.lookahead_slots);
    c.policy.deadband_bikes = doc.integer("policy.deadband_bikes", c.policy.deadband_bikes);
    c.policy.per_bike_service_s = doc.integer("policy.per_bike_service_s", c.policy.per_bike_service_s);
    if (c.policy.lookahead_slots < 1) throw ValidationError("policy.lookahead_slots must be at least 1");
    if (c.policy.deadband_bikes < 1) throw ValidationError("policy.deadband_bikes must be at least 1");
    if (c.policy.per_bike_service_s < 0) throw ValidationError("policy.per_bike_service_s must be non-negative");

    c.sim_models = detail::model_list(doc, "simulate.models", c.sim_models);
    c.perfect_information = doc.boolean("simulate.perfect_information", c.perfect_information);
    c.zero_vehicle = doc.boolean("simulate.zero_vehicle", c.zero_vehicle);
    c.sim_role = parse_role(doc.string("simulate.days", "test"));
    c.max_days = doc.integer("simulate.max_days", 0);
    if (c.max_days < 0) throw ValidationError("simulate.max_days must be non-negative");
    auto sc = doc.string("simulate.scenarios", "replay");
    if (sc == "replay") c.scenarios = ScenarioSource::Replay;
    else if (sc == "sampled") c.scenarios = ScenarioSource::Sampled;
    else if (sc == "synthetic") c.scenarios = ScenarioSource::Synthetic;
    else throw ValidationError("simulate.scenarios must be \"replay\", \"sampled\" or \"synthetic\"");
    if (c.scenarios == ScenarioSource::Synthetic && c.source != "synthetic")
        throw ValidationError("simulate.scenarios = \"synthetic\" needs data.source = \"synthetic\"");
    c.external_forecast = doc.path("simulate.external_forecast");
    c.external_name = doc.string("simulate.external_name", c.external_name);
    c.per_slot = doc.boolean("simulate.per_slot", false);

    c.max_fleet = doc.integer("sweep.max_fleet", c.max_fleet);
    if (c.max_fleet < 0) throw ValidationError("sweep.max_fleet must be non-negative");
    c.sweep_models = detail::model_list(doc, "sweep.models", c.sweep_models);

    c.out_dir = doc.has("output.dir") ? doc.path("output.dir") : (doc.base_dir() / "out").lexically_normal().string();
    c.write_inputs = doc.boolean("output.write_inputs", false);
    c.write_models = doc.boolean("output.write_models", true);
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) { return parse_config(config::Document::load(path)); }

// ---------------------------------------------------------------------------
// Inputs

struct Inputs {
    Layout layout;
    StationIndex ids;
    std::vector<TripRecord> trips;
    std::size_t rejected_rows = 0;
    Dataset dataset;
    std::optional<synthetic::City> city;
    std::map<Date, std::vector<TripRecord>> trips_by_day;  // filled on demand
};

inline Inputs load_inputs(const ExperimentConfig& c) {
    Inputs in;
    std::vector<DayContext> days;
    if (c.source == "synthetic") {
        auto params = c.city;
        if (!c.city_seed_set) params.seed = c.seed;
        in.city.emplace(params);
        in.layout = in.city->layout();
        in.ids = StationIndex::identity(in.layout.size());
        days = synthetic::make_calendar(make_date(c.first_year, 1, 1), make_date(c.first_year + c.years - 1, 12, 31),
                                        synthetic::derive_seed(params.seed, {10}));
        in.trips = synthetic::sample_history(*in.city, days, synthetic::derive_seed(params.seed, {11}));
    } else {
        auto loaded = load_layout(c.layout, c.graph_time, c.graph_distance);
        in.layout = std::move(loaded.layout);
        in.ids = std::move(loaded.ids);
        auto log = ingest_trip_log(c.trips, in.ids);
        in.trips = std::move(log.trips);
        in.rejected_rows = log.rejected.size();
        auto wf = csv::open_in(c.weather);
        auto weather = load_weather(wf, c.weather);
        auto cf = csv::open_in(c.calendar);
        auto cal = load_calendar(cf, c.calendar);
        if (weather.empty()) throw ValidationError(c.weather + ": no days");
        Date first = c.first_day.empty() ? weather.begin()->first : parse_date(c.first_day);
        Date last = c.last_day.empty() ? weather.rbegin()->first : parse_date(c.last_day);
        if (last < first) throw ValidationError("data.last_day is before data.first_day");
        days = build_calendar(weather, cal, first, last);
    }
    in.dataset = split_by_year(aggregate(in.trips, in.layout.size(), std::move(days)), c.split);
    return in;
}

inline const std::vector<TripRecord>& trips_on(Inputs& in, Date d) {
    if (in.trips_by_day.empty())
        for (const auto& t : in.trips) in.trips_by_day[t.withdrawal_time.day].push_back(t);
    static const std::vector<TripRecord> none;
    auto it = in.trips_by_day.find(d);
    return it == in.trips_by_day.end() ? none : it->second;
}

// ---------------------------------------------------------------------------
// Report helpers

/// Plain-text table with right-aligned columns after the first.
class TextTable {
public:
    explicit TextTable(std::vector<std::string> header) : rows_{std::move(header)} {}
    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

    std::string str() const {
        std::vector<std::size_t> w;
        for (const auto& r : rows_)
            for (std::size_t k = 0; k < r.size(); ++k) {
                if (w.size() <= k) w.push_back(0);
                w[k] = std::max(w[k], r[k].size());
            }
        std::ostringstream out;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            for (std::size_t k = 0; k < rows_[i].size(); ++k) {
                const auto& cell = rows_[i][k];
                std::string pad(w[k] - cell.size(), ' ');
                if (k) out << "  ";
                out << (k == 0 ? cell + pad : pad + cell);
            }
            out << '\n';
            if (i == 0) {
                std::size_t total = 0;
                for (auto x : w) total += x;
                out << std::string(total + 2 * (w.size() - 1), '-') << '\n';
            }
        }
        return out.str();
    }

private:
    std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const fs::path& path, const std::string& text) {
    auto f = csv::open_out(path.string());
    f << text;
}

inline std::vector<int> days_of_year(const Dataset& d, int year) {
    std::vector<int> out;
    for (int k = 0; k < d.n_days(); ++k)
        if (d.days[k].year == year) out.push_back(k);
    return out;
}

// ---------------------------------------------------------------------------
// build-dataset

struct DatasetSummary {
    std::size_t rows = 0;
    int n_stations = 0;
    int n_days = 0;
    std::size_t trips = 0;
    std::size_t rejected_rows = 0;
    double zero_fill_fraction = 0.0;
    std::map<Role, int> days_by_role;
};

inline DatasetSummary summarize(const Inputs& in) {
    const auto& d = in.dataset;
    DatasetSummary s;
    s.rows = d.size();
    s.n_stations = d.n_stations;
    s.n_days = d.n_days();
    s.trips = in.trips.size();
    s.rejected_rows = in.rejected_rows;
    std::size_t zero = 0;
    for (std::size_t i = 0; i < d.size(); ++i) zero += d.withdrawals[i] == 0 && d.returns[i] == 0;
    s.zero_fill_fraction = d.size() ? double(zero) / d.size() : 0.0;
    for (auto r : d.day_role) ++s.days_by_role[r];
    return s;
}

inline std::string summary_text(const DatasetSummary& s, const Dataset& d) {
    std::ostringstream out;
    out << "rows = " << s.rows << "\nstations = " << s.n_stations << "\ndays = " << s.n_days;
    if (s.n_days) out << "\nfirst_day = " << format_date(d.days.front().date) << "\nlast_day = " << format_date(d.days.back().date);
    out << "\ntrips = " << s.trips << "\nrejected_rows = " << s.rejected_rows
        << "\nzero_fill_fraction = " << csv::fixed(s.zero_fill_fraction, 6) << '\n';
    for (Role r : {Role::Train, Role::Validation, Role::Test, Role::Unused}) {
        auto it = s.days_by_role.find(r);
        int n = it == s.days_by_role.end() ? 0 : it->second;
        out << role_name(r) << "_days = " << n << '\n';
        out << role_name(r) << "_rows = " << std::size_t(n) * kSlotsPerDay * s.n_stations << '\n';
    }
    return out.str();
}

inline DatasetSummary cmd_build_dataset(const ExperimentConfig& c) {
    auto in = load_inputs(c);
    fs::create_directories(c.out_dir);
    {
        auto f = csv::open_out((fs::path(c.out_dir) / "dataset.csv").string());
        write_dataset(f, in.dataset);
    }
    auto s = summarize(in);
    write_text(fs::path(c.out_dir) / "summary.txt", summary_text(s, in.dataset));
    if (c.write_inputs) {
        auto dir = fs::path(c.out_dir) / "inputs";
        fs::create_directories(dir);
        auto t = csv::open_out((dir / "trips.csv").string());
        write_trip_log(t, in.trips, &in.ids);
        auto w = csv::open_out((dir / "weather.csv").string());
        write_weather(w, in.dataset.days);
        auto k = csv::open_out((dir / "calendar.csv").string());
        write_calendar(k, in.dataset.days);
        auto l = csv::open_out((dir / "layout.csv").string());
        write_layout(l, in.layout);
        auto gt = csv::open_out((dir / "graph_time.csv").string());
        write_matrix(gt, in.layout.graph, false);
        auto gd = csv::open_out((dir / "graph_distance.csv").string());
        write_matrix(gd, in.layout.graph, true);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Model fitting shared by the commands

inline ModelSpec spec_for(const ExperimentConfig& c, const std::string& name) {
    auto s = parse_model_name(name);
    s.grid = c.grid;
    s.seed = synthetic::derive_seed(c.seed, {20, static_cast<int>(s.family), static_cast<int>(s.approach)});
    return s;
}

inline ForecastModel fit_named(const ExperimentConfig& c, const Dataset& d, const std::string& name) {
    auto train = d.days_with_role(Role::Train);
    auto valid = d.days_with_role(Role::Validation);
    if (train.empty()) throw ValidationError("no training days: [split] assigns no year to train");
    return fit(spec_for(c, name), d, train, valid, FitOptions{c.jobs});
}

// ---------------------------------------------------------------------------
// eval-forecast

struct EvalRow {
    std::string model;
    int year = 0;
    std::optional<double> mse;
    std::optional<double> gap;  // empty when undefined
    std::size_t n = 0;
    std::size_t excluded = 0;
    std::string status = "ok";
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::string best_model;
};

/// Fills gaps per year from the MSE column.
inline void fill_gaps(std::vector<EvalRow>& rows) {
    std::map<int, double> best;
    for (const auto& r : rows)
        if (r.mse && (!best.count(r.year) || *r.mse < best[r.year])) best[r.year] = *r.mse;
    for (auto& r : rows) {
        if (!r.mse) continue;
        double b = best[r.year];
        if (b > 0) r.gap = pct_gap(*r.mse, b);
        else if (*r.mse == 0) r.gap = 0.0;
    }
}

inline std::string eval_table(const std::vector<EvalRow>& rows, const std::vector<int>& years) {
    std::vector<std::string> header{"model"};
    for (int y : years) {
        header.push_back("MSE " + std::to_string(y));
        header.push_back("gap% " + std::to_string(y));
    }
    TextTable t(header);
    std::vector<std::string> order;
    for (const auto& r : rows)
        if (std::find(order.begin(), order.end(), r.model) == order.end()) order.push_back(r.model);
    for (const auto& m : order) {
        std::vector<std::string> line{m};
        for (int y : years) {
            auto it = std::find_if(rows.begin(), rows.end(), [&](const EvalRow& r) { return r.model == m && r.year == y; });
            if (it == rows.end() || !it->mse) {
                line.push_back(it == rows.end() ? "-" : "n/a");
                line.push_back("-");
                continue;
            }
            line.push_back(csv::fixed(*it->mse, 3) + (it->excluded ? "*" : ""));
            line.push_back(it->gap ? csv::fixed(*it->gap, 2) : "undef");
        }
        t.add(line);
    }
    return t.str() + "* slots without 52-week history excluded; n/a: insufficient history\n";
}

inline void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
    out << "model,year,mse,gap_pct,n,excluded,status\n";
    for (const auto& r : rows)
        out << r.model << ',' << r.year << ',' << (r.mse ? csv::fixed(*r.mse, 6) : "") << ','
            << (r.gap ? csv::fixed(*r.gap, 4) : "") << ',' << r.n << ',' << r.excluded << ',' << r.status << '\n';
}

/// Error (prediction minus actual) distributions by slot of day and by day of week.
inline void write_error_distributions(const fs::path& dir, const ForecastModel& m, const Dataset& d,
                                      const std::vector<int>& days) {
    auto pred = predict_days(m, d, days);
    auto actual = actual_days(d, days);
    std::vector<std::vector<double>> by_slot(kSlotsPerDay), by_dow(7);
    std::size_t i = 0;
    for (int day : days)
        for (int slot = 0; slot < kSlotsPerDay; ++slot)
            for (StationId s = 0; s < d.n_stations; ++s, ++i) {
                if (std::isnan(pred[i])) continue;
                double e = pred[i] - actual[i];
                by_slot[slot].push_back(e);
                by_dow[static_cast<int>(d.days[day].day_of_week)].push_back(e);
            }
    auto emit = [](std::ostream& out, const std::string& label, std::vector<double> v) {
        double se = 0;
        for (double e : v) se += e * e;
        auto b = box_stats(v);
        out << label << ',' << v.size() << ',' << csv::fixed(v.empty() ? 0.0 : se / v.size(), 6) << ','
            << csv::fixed(b.min, 6) << ',' << csv::fixed(b.q1, 6) << ',' << csv::fixed(b.median, 6) << ','
            << csv::fixed(b.q3, 6) << ',' << csv::fixed(b.max, 6) << '\n';
    };
    static constexpr const char* dow[] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
    auto a = csv::open_out((dir / "errors_by_slot.csv").string());
    a << "slot,n,mse,err_min,err_q1,err_median,err_q3,err_max\n";
    for (int s = 0; s < kSlotsPerDay; ++s) emit(a, std::to_string(s), by_slot[s]);
    auto b = csv::open_out((dir / "errors_by_dow.csv").string());
    b << "day_of_week,n,mse,err_min,err_q1,err_median,err_q3,err_max\n";
    for (int k = 0; k < 7; ++k) emit(b, dow[k], by_dow[k]);
}

inline void write_importance(std::ostream& out, const ImportanceReport& r) {
    out << "feature,split_count,share,station_min,station_q1,station_median,station_q3,station_max\n";
    for (int f = 0; f < kFeatureCount; ++f) {
        const auto& b = r.distribution[f];
        out << kFeatureNames[f] << ',' << r.split_counts[f] << ',' << csv::fixed(r.overall_share[f], 6) << ','
            << csv::fixed(b.min, 6) << ',' << csv::fixed(b.q1, 6) << ',' << csv::fixed(b.median, 6) << ','
            << csv::fixed(b.q3, 6) << ',' << csv::fixed(b.max, 6) << '\n';
    }
}

inline EvalReport cmd_eval_forecast(const ExperimentConfig& c) {
    auto in = load_inputs(c);
    const auto& d = in.dataset;
    const fs::path out = fs::path(c.out_dir) / "eval";
    fs::create_directories(out);
    std::vector<int> eval_days;
    for (int y : c.eval_years) {
        auto v = days_of_year(d, y);
        if (v.empty()) throw ValidationError("evaluation year " + std::to_string(y) + " is not in the dataset");
        eval_days.insert(eval_days.end(), v.begin(), v.end());
    }
    EvalReport rep;
    std::map<std::string, ForecastModel> models;
    for (const auto& name : c.models) {
        auto m = fit_named(c, d, name);
        for (int y : c.eval_years) {
            EvalRow r;
            r.model = name;
            r.year = y;
            try {
                auto e = evaluate(m, d, days_of_year(d, y));
                r.mse = e.mse;
                r.n = e.n;
                r.excluded = e.excluded;
                if (e.excluded) r.status = "partial history";
            } catch (const Error& e) {
                if (std::string(e.what()).find("insufficient history") == std::string::npos) throw;
                r.status = "insufficient history";
                r.excluded = days_of_year(d, y).size() * kSlotsPerDay * d.n_stations;
            }
            rep.rows.push_back(r);
        }
        if (is_tree_family(m.spec().family)) {
            auto f = csv::open_out((out / ("importance_" + name + ".csv")).string());
            write_importance(f, feature_importance(m));
        }
        {
            auto f = csv::open_out((out / ("forecast_" + name + ".csv")).string());
            write_forecast_csv(f, forecast_table(m, d, eval_days));
        }
        if (c.write_models) {
            fs::create_directories(out / "models");
            auto f = csv::open_out((out / "models" / (name + ".model")).string());
            save_model(f, m);
        }
        models.emplace(name, std::move(m));
    }
    fill_gaps(rep.rows);
    {
        auto f = csv::open_out((out / "mse.csv").string());
        write_eval_csv(f, rep.rows);
    }
    write_text(out / "mse.txt", eval_table(rep.rows, c.eval_years));

    // Best model: lowest mean MSE over evaluation years among fully evaluated models.
    double best = std::numeric_limits<double>::infinity();
    for (const auto& name : c.models) {
        double s = 0;
        int k = 0;
        bool complete = true;
        for (const auto& r : rep.rows)
            if (r.model == name) {
                if (!r.mse) complete = false;
                else s += *r.mse, ++k;
            }
        if (complete && k && s / k < best) {
            best = s / k;
            rep.best_model = name;
        }
    }
    if (!rep.best_model.empty()) {
        write_error_distributions(out, models.at(rep.best_model), d, eval_days);
        write_text(out / "best_model.txt", rep.best_model + "\n");
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Simulation campaigns

/// Vehicles on duty for a day: none on Sundays and holidays, the Saturday
/// shift when the morning shift is staffed, otherwise `morning` + `afternoon`.
inline Fleet fleet_for_day(const FleetConfig& f, int morning, int afternoon, const DayContext& ctx,
                           const Fleet* explicit_fleet = nullptr) {
    Fleet out;
    switch (day_type(ctx)) {
        case DayType::Sunday:
            return out;
        case DayType::Saturday:
            if (morning >= 1)
                for (int k = 0; k < f.saturday_vehicles; ++k)
                    out.vehicles.push_back(Vehicle{k, f.capacity, f.saturday_shift, std::nullopt});
            return out;
        case DayType::Working:
            break;
    }
    if (explicit_fleet) return *explicit_fleet;
    int id = 0;
    for (int k = 0; k < morning; ++k) out.vehicles.push_back(Vehicle{id++, f.capacity, f.morning_shift, std::nullopt});
    for (int k = 0; k < afternoon; ++k) out.vehicles.push_back(Vehicle{id++, f.capacity, f.afternoon_shift, std::nullopt});
    return out;
}

struct Campaign {
    std::vector<int> days;            // dataset day offsets
    std::vector<Scenario> scenarios;  // one per day
};

inline Campaign build_campaign(const ExperimentConfig& c, Inputs& in) {
    const auto& d = in.dataset;
    Campaign cp;
    cp.days = d.days_with_role(c.sim_role);
    if (cp.days.empty()) throw ValidationError("no days with role '" + std::string(role_name(c.sim_role)) + "' to simulate");
    if (c.max_days > 0 && int(cp.days.size()) > c.max_days) cp.days.resize(c.max_days);
    std::optional<RateProfile> rates;
    std::optional<ODModel> od;
    if (c.scenarios == ScenarioSource::Sampled) {
        auto train = d.days_with_role(Role::Train);
        if (train.empty()) throw ValidationError("sampled scenarios need training days");
        rates = fit_rates(d, train);
        std::vector<TripRecord> train_trips;
        for (int day : train) {
            const auto& t = trips_on(in, d.days[day].date);
            train_trips.insert(train_trips.end(), t.begin(), t.end());
        }
        od = ODModel::fit(train_trips, d.n_stations);
    }
    for (int day : cp.days) {
        const auto& ctx = d.days[day];
        const auto seed = synthetic::derive_seed(c.seed, {30, (ctx.date - Date{}).count()});
        switch (c.scenarios) {
            case ScenarioSource::Replay:
                cp.scenarios.push_back(replay_scenario(trips_on(in, ctx.date), ctx.date, ctx));
                break;
            case ScenarioSource::Sampled:
                cp.scenarios.push_back(sample_scenario(*rates, *od, ctx, seed));
                break;
            case ScenarioSource::Synthetic:
                cp.scenarios.push_back(in.city->sample_day(ctx, seed));
                break;
        }
    }
    return cp;
}

/// One policy variant over the campaign days.
struct RunSpec {
    std::string name;
    PolicyKind policy = PolicyKind::TargetBand;
    int morning = 0;
    int afternoon = 0;
    bool perfect_information = false;
    const ForecastTable* forecasts = nullptr;  // unused for perfect information and no-relocation runs
};

inline std::vector<std::vector<DayKpi>> run_campaign(const ExperimentConfig& c, const Inputs& in, const Campaign& cp,
                                                     const std::vector<RunSpec>& runs, const Fleet* explicit_fleet = nullptr) {
    const auto& d = in.dataset;
    const std::size_t n_days = cp.days.size();
    std::vector<std::vector<DayKpi>> out(runs.size(), std::vector<DayKpi>(n_days));
    parallel_for(runs.size() * n_days, c.jobs, [&](std::size_t job) {
        const auto& r = runs[job / n_days];
        const std::size_t k = job % n_days;
        const int day = cp.days[k];
        const auto& ctx = d.days[day];
        Fleet fleet = fleet_for_day(c.fleet, r.morning, r.afternoon, ctx, explicit_fleet);
        std::vector<double> fc;
        if (r.perfect_information) fc = scenario_net_demand(cp.scenarios[k], d.n_stations);
        else if (r.forecasts && r.policy == PolicyKind::TargetBand) fc = r.forecasts->day(day);
        else fc.assign(std::size_t(d.n_stations) * kSlotsPerDay, 0.0);
        const auto seed = synthetic::derive_seed(c.seed, {40, r.morning, r.afternoon, (ctx.date - Date{}).count()});
        out[job / n_days][k] = simulate_day(in.layout, fleet, cp.scenarios[k], PolicyConfig{r.policy, c.policy}, fc, seed);
    });
    return out;
}


/// Means over relocation days, or over all days when the campaign has none.
inline KpiGroupStats campaign_stats(const std::vector<DayKpi>& days) {
    auto s = aggregate_kpis(days, Grouping::None, true);
    return s.empty() ? aggregate_kpis(days, Grouping::None).front() : s.front();
}

inline double mean_total_missed(const std::vector<DayKpi>& days) { return campaign_stats(days).total_missed.mean; }

struct SimulationReport {
    std::vector<std::string> names;
    std::vector<std::vector<DayKpi>> days;  // parallel to names

    const std::vector<DayKpi>& of(const std::string& name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw Error("no simulation run named " + name);
        return days[it - names.begin()];
    }
};

inline std::vector<RunSpec> model_runs(const ExperimentConfig& c, const std::vector<std::string>& names,
                                       const std::map<std::string, ForecastTable>& tables) {
    std::vector<RunSpec> runs;
    for (const auto& n : names) runs.push_back({n, PolicyKind::TargetBand, c.fleet.morning, c.fleet.afternoon, false, &tables.at(n)});
    return runs;
}

inline std::map<std::string, ForecastTable> forecast_tables(const ExperimentConfig& c, const Dataset& d,
                                                            const std::vector<std::string>& names,
                                                            const std::vector<int>& days) {
    std::map<std::string, ForecastTable> out;
    for (const auto& n : names) {
        if (out.count(n)) continue;
        if (n == c.external_name && !c.external_forecast.empty()) {
            auto f = csv::open_in(c.external_forecast);
            out.emplace(n, read_forecast_csv(f, d.n_stations, std::int64_t(d.n_days()) * kSlotsPerDay, c.external_forecast));
            continue;
        }
        out.emplace(n, forecast_table(fit_named(c, d, n), d, days));
    }
    return out;
}

inline void write_summary(const fs::path& dir, const SimulationReport& rep) {
    auto has = [&](const std::string& n) { return std::find(rep.names.begin(), rep.names.end(), n) != rep.names.end(); };
    std::optional<double> base, floor;
    if (has("cm")) base = campaign_stats(rep.of("cm")).total_missed.mean;
    if (has("perfect-information")) floor = campaign_stats(rep.of("perfect-information")).total_missed.mean;
    auto f = csv::open_out((dir / "summary.csv").string());
    f << "configuration,days,missed_withdrawals,missed_returns,total_missed,total_km,relocated_bikes,gap_from_cm_pct,"
         "improvement_net_of_floor_pct\n";
    TextTable t({"configuration", "days", "missed W", "missed R", "total", "km", "relocated", "gap CM %", "net impr. %"});
    for (std::size_t i = 0; i < rep.names.size(); ++i) {
        auto s = campaign_stats(rep.days[i]);
        const double v = s.total_missed.mean;
        std::string gap, net;
        if (base && *base > 0) gap = csv::fixed(gap_from_reference(v, *base), 2);
        if (base && floor && *base - *floor > 0) net = csv::fixed(improvement_net_of_floor(v, *base, *floor), 2);
        f << rep.names[i] << ',' << s.days << ',' << csv::fixed(s.missed_withdrawals.mean, 4) << ','
          << csv::fixed(s.missed_returns.mean, 4) << ',' << csv::fixed(v, 4) << ','
          << csv::fixed(s.total_km.mean, 4) << ',' << csv::fixed(s.relocated_bikes.mean, 4) << ',' << gap << ',' << net
          << '\n';
        t.add({rep.names[i], std::to_string(s.days), csv::fixed(s.missed_withdrawals.mean, 2),
               csv::fixed(s.missed_returns.mean, 2), csv::fixed(v, 2), csv::fixed(s.total_km.mean, 2),
               csv::fixed(s.relocated_bikes.mean, 2), gap.empty() ? "-" : gap, net.empty() ? "-" : net});
    }
    write_text(dir / "summary.txt", "Daily means over relocation days (Monday to Saturday, holidays excluded)\n\n" + t.str());

    for (auto [g, file] : {std::pair{Grouping::Month, "by_month.csv"}, {Grouping::DayOfWeek, "by_dow.csv"}}) {
        auto o = csv::open_out((dir / file).string());
        o << "configuration,group,days,mean_total_missed,min,q1,median,q3,max\n";
        for (std::size_t i = 0; i < rep.names.size(); ++i)
            for (const auto& s : aggregate_kpis(rep.days[i], g, true)) {
                const auto& b = s.total_missed;
                o << rep.names[i] << ',' << s.group << ',' << s.days << ',' << csv::fixed(b.mean, 4) << ','
                  << csv::fixed(b.min, 4) << ',' << csv::fixed(b.q1, 4) << ',' << csv::fixed(b.median, 4) << ','
                  << csv::fixed(b.q3, 4) << ',' << csv::fixed(b.max, 4) << '\n';
            }
    }
}

inline SimulationReport cmd_simulate(const ExperimentConfig& c) {
    auto in = load_inputs(c);
    const auto& d = in.dataset;
    auto cp = build_campaign(c, in);
    std::optional<Fleet> explicit_fleet;
    if (!c.fleet.file.empty()) {
        auto f = csv::open_in(c.fleet.file);
        explicit_fleet = load_fleet(f, d.n_stations, c.fleet.file);
    }
    std::vector<std::string> names = c.sim_models;
    if (!c.external_forecast.empty() && std::find(names.begin(), names.end(), c.external_name) == names.end())
        names.push_back(c.external_name);
    auto tables = forecast_tables(c, d, names, cp.days);
    auto runs = model_runs(c, names, tables);
    if (c.perfect_information) runs.push_back({"perfect-information", PolicyKind::TargetBand, c.fleet.morning, c.fleet.afternoon, true, nullptr});
    if (c.zero_vehicle) runs.push_back({"zero-vehicle", PolicyKind::None, 0, 0, false, nullptr});

    SimulationReport rep;
    for (const auto& r : runs) rep.names.push_back(r.name);
    rep.days = run_campaign(c, in, cp, runs, explicit_fleet ? &*explicit_fleet : nullptr);
    // The zero-vehicle run ignores any explicit fleet.
    if (c.zero_vehicle && explicit_fleet) rep.days.back() = run_campaign(c, in, cp, {runs.back()}).front();

    const fs::path out = fs::path(c.out_dir) / "simulate";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        fs::create_directories(out / runs[i].name);
        auto f = csv::open_out((out / runs[i].name / "kpi.csv").string());
        write_kpi_csv(f, rep.days[i], c.per_slot);
    }
    write_summary(out, rep);
    return rep;
}

// ---------------------------------------------------------------------------
// fleet-sweep

struct SweepMatrix {
    std::string model;
    int max_fleet = 0;
    std::map<std::pair<int, int>, double> cells;                      // (morning, afternoon) -> mean total missed
    std::map<std::pair<int, int>, std::vector<DayKpi>> days;          // per-day results for paired comparisons
    std::set<std::pair<int, int>> best;                               // best cell per fleet size

    void mark_best() {
        best.clear();
        for (int size = 0; size <= max_fleet; ++size) {
            std::optional<std::pair<int, int>> b;
            for (int m = size; m >= 0; --m) {
                std::pair<int, int> k{m, size - m};
                if (!b || cells.at(k) < cells.at(*b)) b = k;
            }
            best.insert(*b);
        }
    }
};

inline std::string sweep_table(const SweepMatrix& s) {
    std::vector<std::string> header{"morning \\ afternoon"};
    for (int a = 0; a <= s.max_fleet; ++a) header.push_back(std::to_string(a));
    TextTable t(header);
    for (int m = 0; m <= s.max_fleet; ++m) {
        std::vector<std::string> row{std::to_string(m)};
        for (int a = 0; a <= s.max_fleet - m; ++a) {
            std::pair<int, int> k{m, a};
            row.push_back(csv::fixed(s.cells.at(k), 2) + (s.best.count(k) ? "*" : " "));
        }
        t.add(row);
    }
    return "Mean daily missed requests, model " + s.model + " (* best per fleet size)\n\n" + t.str();
}

inline std::vector<SweepMatrix> cmd_fleet_sweep(const ExperimentConfig& c) {
    auto in = load_inputs(c);
    const auto& d = in.dataset;
    auto cp = build_campaign(c, in);
    auto tables = forecast_tables(c, d, c.sweep_models, cp.days);
    std::vector<SweepMatrix> out;
    const fs::path dir = fs::path(c.out_dir) / "sweep";
    fs::create_directories(dir);
    for (const auto& name : c.sweep_models) {
        std::vector<RunSpec> runs;
        for (int m = 0; m <= c.max_fleet; ++m)
            for (int a = 0; m + a <= c.max_fleet; ++a)
                runs.push_back({name + "/" + std::to_string(m) + "-" + std::to_string(a),
                                m + a == 0 ? PolicyKind::None : PolicyKind::TargetBand, m, a, false, &tables.at(name)});
        auto results = run_campaign(c, in, cp, runs);
        SweepMatrix s;
        s.model = name;
        s.max_fleet = c.max_fleet;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            std::pair<int, int> k{runs[i].morning, runs[i].afternoon};
            s.cells[k] = mean_total_missed(results[i]);
            s.days[k] = std::move(results[i]);
        }
        s.mark_best();
        auto f = csv::open_out((dir / (name + ".csv")).string());
        f << "morning,afternoon,fleet_size,mean_total_missed,best\n";
        for (const auto& [k, v] : s.cells)
            f << k.first << ',' << k.second << ',' << k.first + k.second << ',' << csv::fixed(v, 4) << ','
              << (s.best.count(k) ? 1 : 0) << '\n';
        write_text(dir / (name + ".txt"), sweep_table(s));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace bss::exp
