#pragma once

// Trip-log, weather, calendar and layout ingestion; aggregation into a dense
// per-station half-hour net-demand dataset; year-based split tagging.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "bss/core.hpp"
#include "bss/csv.hpp"

namespace bss {

struct TripRecord {
    Timestamp withdrawal_time;
    StationId origin = 0;
    Timestamp return_time;
    StationId destination = 0;
};

struct RejectedRow {
    std::size_t line = 0;
    std::string reason;
};

struct TripLog {
    std::vector<TripRecord> trips;
    std::vector<RejectedRow> rejected;
};

/// Maps external station ids (as written in files) onto the dense range [0, N).
class StationIndex {
public:
    StationIndex() = default;
    explicit StationIndex(std::vector<long long> external_ids) : external_(std::move(external_ids)) {
        for (std::size_t k = 0; k < external_.size(); ++k) {
            if (!dense_.emplace(external_[k], static_cast<StationId>(k)).second)
                throw ValidationError("duplicate station id " + std::to_string(external_[k]));
        }
    }
    static StationIndex identity(int n) {
        std::vector<long long> ids(n);
        for (int k = 0; k < n; ++k) ids[k] = k;
        return StationIndex(std::move(ids));
    }

    std::optional<StationId> find(long long external) const {
        auto it = dense_.find(external);
        if (it == dense_.end()) return std::nullopt;
        return it->second;
    }
    long long external(StationId s) const { return external_.at(s); }
    int size() const { return static_cast<int>(external_.size()); }

private:
    std::vector<long long> external_;
    std::unordered_map<long long, StationId> dense_;
};

inline constexpr std::string_view kTripsHeader = "withdrawal_time,origin,return_time,destination";
inline constexpr std::string_view kWeatherHeader = "date,avg_temp_c,avg_wind_kmh,fog,rain,snow,storm";
inline constexpr std::string_view kCalendarHeader = "date,public_holiday,school_day";
inline constexpr std::string_view kLayoutHeader = "id,capacity,initial_stock,x_m,y_m,elevation_m";

/// Parses a trip log. Rows whose return precedes the withdrawal are rejected
/// and reported; an unknown station id is a hard error.
inline TripLog ingest_trip_log(std::istream& in, const StationIndex& stations, const std::string& name = "trips.csv") {
    TripLog log;
    if (!csv::expect_header(in, kTripsHeader, name)) return log;
    std::string line;
    std::size_t lineno = 1;
    while (csv::getline_clean(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = csv::split(line);
        const auto at = csv::where(name, lineno);
        if (f.size() != 4) {
            log.rejected.push_back({lineno, "expected 4 fields"});
            continue;
        }
        TripRecord r;
        try {
            r.withdrawal_time = parse_timestamp(f[0]);
            r.return_time = parse_timestamp(f[2]);
        } catch (const ValidationError& e) {
            log.rejected.push_back({lineno, e.what()});
            continue;
        }
        auto origin = stations.find(csv::to_int(f[1], at));
        auto dest = stations.find(csv::to_int(f[3], at));
        if (!origin) throw ValidationError(at + ": unknown station id " + std::string(f[1]));
        if (!dest) throw ValidationError(at + ": unknown station id " + std::string(f[3]));
        r.origin = *origin;
        r.destination = *dest;
        if (r.return_time < r.withdrawal_time) {
            log.rejected.push_back({lineno, "return before withdrawal"});
            continue;
        }
        log.trips.push_back(r);
    }
    return log;
}

inline TripLog ingest_trip_log(const std::string& path, const StationIndex& stations) {
    auto f = csv::open_in(path);
    return ingest_trip_log(f, stations, path);
}

inline void write_trip_log(std::ostream& out, const std::vector<TripRecord>& trips, const StationIndex* ids = nullptr) {
    out << kTripsHeader << '\n';
    for (const auto& t : trips) {
        out << format_timestamp(t.withdrawal_time) << ',' << (ids ? ids->external(t.origin) : t.origin) << ','
            << format_timestamp(t.return_time) << ',' << (ids ? ids->external(t.destination) : t.destination) << '\n';
    }
}

inline std::map<Date, WeatherDay> load_weather(std::istream& in, const std::string& name = "weather.csv") {
    std::map<Date, WeatherDay> out;
    if (!csv::expect_header(in, kWeatherHeader, name)) return out;
    std::string line;
    std::size_t lineno = 1;
    while (csv::getline_clean(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = csv::split(line);
        const auto at = csv::where(name, lineno);
        if (f.size() != 7) throw ValidationError(at + ": expected 7 fields");
        WeatherDay w{csv::to_double(f[1], at), csv::to_double(f[2], at), csv::to_flag(f[3], at),
                     csv::to_flag(f[4], at),   csv::to_flag(f[5], at),   csv::to_flag(f[6], at)};
        out[parse_date(f[0])] = w;
    }
    return out;
}

inline std::map<Date, CalendarDay> load_calendar(std::istream& in, const std::string& name = "calendar.csv") {
    std::map<Date, CalendarDay> out;
    if (!csv::expect_header(in, kCalendarHeader, name)) return out;
    std::string line;
    std::size_t lineno = 1;
    while (csv::getline_clean(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = csv::split(line);
        const auto at = csv::where(name, lineno);
        if (f.size() != 3) throw ValidationError(at + ": expected 3 fields");
        out[parse_date(f[0])] = CalendarDay{csv::to_flag(f[1], at), csv::to_flag(f[2], at)};
    }
    return out;
}

inline void write_weather(std::ostream& out, const std::vector<DayContext>& days) {
    out << kWeatherHeader << '\n';
    for (const auto& d : days)
        out << format_date(d.date) << ',' << csv::num(d.avg_temperature) << ',' << csv::num(d.avg_wind_speed) << ','
            << d.fog << ',' << d.rain << ',' << d.snow << ',' << d.storm << '\n';
}

inline void write_calendar(std::ostream& out, const std::vector<DayContext>& days) {
    out << kCalendarHeader << '\n';
    for (const auto& d : days)
        out << format_date(d.date) << ',' << d.is_public_holiday << ',' << d.is_school_day << '\n';
}

/// Builds one DayContext per day in [first, last]; a day missing from either
/// source is an error naming the day.
inline std::vector<DayContext> build_calendar(const std::map<Date, WeatherDay>& weather,
                                              const std::map<Date, CalendarDay>& calendar, Date first, Date last) {
    std::vector<DayContext> out;
    for (Date d = first; d <= last; d += std::chrono::days{1}) {
        auto w = weather.find(d);
        if (w == weather.end()) throw ValidationError("missing weather day " + format_date(d));
        auto c = calendar.find(d);
        if (c == calendar.end()) throw ValidationError("missing calendar day " + format_date(d));
        out.push_back(make_day_context(d, first, w->second, c->second));
    }
    return out;
}

namespace detail {

inline std::vector<std::vector<double>> read_matrix(std::istream& in, const std::string& name) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (csv::getline_clean(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        for (auto f : csv::split(line)) row.push_back(csv::to_double(f, csv::where(name, lineno)));
        rows.push_back(std::move(row));
    }
    for (const auto& r : rows)
        if (r.size() != rows.size()) throw ValidationError(name + ": matrix is not square");
    return rows;
}

}  // namespace detail

struct LoadedLayout {
    Layout layout;
    StationIndex ids;
};

/// Reads `layout.csv` plus row-major travel time (s) and distance (m) matrices, depot last.
inline LoadedLayout load_layout(std::istream& stations, std::istream& time_matrix, std::istream& distance_matrix,
                                const std::string& name = "layout.csv") {
    LoadedLayout out;
    std::vector<long long> ext;
    if (!csv::expect_header(stations, kLayoutHeader, name)) throw ValidationError(name + ": empty layout");
    std::string line;
    std::size_t lineno = 1;
    while (csv::getline_clean(stations, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = csv::split(line);
        const auto at = csv::where(name, lineno);
        if (f.size() != 6) throw ValidationError(at + ": expected 6 fields");
        ext.push_back(csv::to_int(f[0], at));
        Station s;
        s.id = static_cast<StationId>(ext.size() - 1);
        s.capacity = static_cast<int>(csv::to_int(f[1], at));
        s.initial_stock = static_cast<int>(csv::to_int(f[2], at));
        s.x_m = csv::to_double(f[3], at);
        s.y_m = csv::to_double(f[4], at);
        s.elevation_m = csv::to_double(f[5], at);
        out.layout.stations.push_back(s);
    }
    out.ids = StationIndex(std::move(ext));
    auto t = detail::read_matrix(time_matrix, "graph_time.csv");
    auto d = detail::read_matrix(distance_matrix, "graph_distance.csv");
    if (t.size() != d.size()) throw ValidationError("time and distance matrices differ in size");
    out.layout.graph = TravelGraph(static_cast<int>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j) out.layout.graph.set(int(i), int(j), t[i][j], d[i][j]);
    auto violations = validate_layout(out.layout);
    if (!violations.empty()) {
        std::string msg = "invalid layout:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw ValidationError(msg);
    }
    return out;
}

inline LoadedLayout load_layout(const std::string& layout_csv, const std::string& time_csv,
                                const std::string& distance_csv) {
    auto a = csv::open_in(layout_csv);
    auto b = csv::open_in(time_csv);
    auto c = csv::open_in(distance_csv);
    return load_layout(a, b, c, layout_csv);
}

inline void write_layout(std::ostream& out, const Layout& l) {
    out << kLayoutHeader << '\n';
    for (const auto& s : l.stations)
        out << s.id << ',' << s.capacity << ',' << s.initial_stock << ',' << csv::num(s.x_m) << ',' << csv::num(s.y_m)
            << ',' << csv::num(s.elevation_m) << '\n';
}

inline void write_matrix(std::ostream& out, const TravelGraph& g, bool distance) {
    for (int i = 0; i < g.dim; ++i) {
        for (int j = 0; j < g.dim; ++j) {
            if (j) out << ',';
            out << csv::num(distance ? g.distance(i, j) : g.time(i, j));
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// fleet.csv

inline constexpr std::string_view kFleetHeader = "id,capacity,shift_start_s,shift_end_s,start_station";

/// One vehicle per row; an empty `start_station` means the depot.
inline Fleet load_fleet(std::istream& in, int n_stations, const std::string& name = "fleet.csv") {
    Fleet f;
    if (!csv::expect_header(in, kFleetHeader, name)) return f;
    std::string line;
    std::size_t lineno = 1;
    while (csv::getline_clean(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto r = csv::split(line);
        const auto at = csv::where(name, lineno);
        if (r.size() != 5) throw ValidationError(at + ": expected 5 fields");
        Vehicle v;
        v.id = static_cast<int>(csv::to_int(r[0], at));
        v.capacity = static_cast<int>(csv::to_int(r[1], at));
        v.shift = {static_cast<int>(csv::to_int(r[2], at)), static_cast<int>(csv::to_int(r[3], at))};
        if (!r[4].empty()) {
            auto s = csv::to_int(r[4], at);
            if (s < 0 || s >= n_stations) throw ValidationError(at + ": start station out of range");
            v.start_station = static_cast<StationId>(s);
        }
        if (v.capacity < 1) throw ValidationError(at + ": vehicle capacity below 1");
        validate_shift(v.shift);
        f.vehicles.push_back(v);
    }
    return f;
}

inline void write_fleet(std::ostream& out, const Fleet& f) {
    out << kFleetHeader << '\n';
    for (const auto& v : f.vehicles) {
        out << v.id << ',' << v.capacity << ',' << v.shift.start << ',' << v.shift.end << ',';
        if (v.start_station) out << *v.start_station;
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Dataset

enum class Role : int { Train = 0, Validation, Test, Unused };

inline std::string_view role_name(Role r) {
    switch (r) {
        case Role::Train: return "train";
        case Role::Validation: return "validation";
        case Role::Test: return "test";
        default: return "unused";
    }
}

inline Role parse_role(std::string_view s) {
    if (s == "train") return Role::Train;
    if (s == "validation") return Role::Validation;
    if (s == "test") return Role::Test;
    if (s == "unused") return Role::Unused;
    throw ValidationError("unknown split role '" + std::string(s) + "'");
}

struct Observation {
    StationId station = 0;
    HalfHourIndex h;
    FeatureVector features;
    int withdrawals = 0;
    int returns = 0;
    int net_demand = 0;
};

/// Dense (day, slot, station) grid of withdrawal and return counts.
struct Dataset {
    Date epoch{};
    int n_stations = 0;
    std::vector<DayContext> days;
    std::vector<std::int32_t> withdrawals;
    std::vector<std::int32_t> returns;
    std::vector<Role> day_role;  // one per day; Train until split_by_year runs

    Dataset() = default;
    Dataset(int stations, std::vector<DayContext> ctx)
        : epoch(ctx.empty() ? Date{} : ctx.front().date),
          n_stations(stations),
          days(std::move(ctx)),
          withdrawals(std::size_t(stations) * kSlotsPerDay * days.size(), 0),
          returns(withdrawals.size(), 0),
          day_role(days.size(), Role::Train) {}

    int n_days() const { return static_cast<int>(days.size()); }
    std::size_t size() const { return withdrawals.size(); }

    std::size_t index(StationId s, int day, int slot) const {
        return (std::size_t(day) * kSlotsPerDay + slot) * n_stations + s;
    }
    int net(StationId s, int day, int slot) const {
        auto i = index(s, day, slot);
        return returns[i] - withdrawals[i];
    }
    int net(StationId s, HalfHourIndex h) const { return net(s, int(h.day_offset()), h.slot()); }

    std::optional<int> day_of(Date d) const {
        auto off = (d - epoch).count();
        if (off < 0 || off >= n_days()) return std::nullopt;
        return static_cast<int>(off);
    }

    Observation observation(StationId s, HalfHourIndex h, bool global_features = true) const {
        int day = static_cast<int>(h.day_offset());
        Observation o;
        o.station = s;
        o.h = h;
        o.features = make_features(days.at(day), h.slot(), global_features ? s : -1);
        auto i = index(s, day, h.slot());
        o.withdrawals = withdrawals[i];
        o.returns = returns[i];
        o.net_demand = o.returns - o.withdrawals;
        return o;
    }

    std::vector<int> days_with_role(Role r) const {
        std::vector<int> out;
        for (int d = 0; d < n_days(); ++d)
            if (day_role[d] == r) out.push_back(d);
        return out;
    }

    std::vector<int> years() const {
        std::vector<int> out;
        for (const auto& d : days)
            if (out.empty() || out.back() != d.year) out.push_back(d.year);
        return out;
    }

    std::vector<int> days_of_year(int year) const {
        std::vector<int> out;
        for (int d = 0; d < n_days(); ++d)
            if (days[d].year == year) out.push_back(d);
        return out;
    }
};

/// Counts withdrawals and returns per (station, half-hour). Trips returning
/// after the covered range contribute only their withdrawal.
inline Dataset aggregate(const std::vector<TripRecord>& trips, int n_stations, std::vector<DayContext> ctx) {
    if (ctx.empty()) throw ValidationError("aggregate: empty calendar");
    for (std::size_t k = 1; k < ctx.size(); ++k)
        if (ctx[k].date != ctx[k - 1].date + std::chrono::days{1})
            throw ValidationError("missing day context for " + format_date(ctx[k - 1].date + std::chrono::days{1}));
    Dataset d(n_stations, std::move(ctx));
    for (const auto& t : trips) {
        if (t.origin < 0 || t.origin >= n_stations || t.destination < 0 || t.destination >= n_stations)
            throw ValidationError("trip references a station outside the layout");
        auto wd = d.day_of(t.withdrawal_time.day);
        if (!wd) throw ValidationError("missing day context for " + format_date(t.withdrawal_time.day));
        d.withdrawals[d.index(t.origin, *wd, t.withdrawal_time.seconds / kSlotSeconds)] += 1;
        auto rd = d.day_of(t.return_time.day);
        if (rd) d.returns[d.index(t.destination, *rd, t.return_time.seconds / kSlotSeconds)] += 1;
    }
    return d;
}

/// Tags every day with the role its calendar year has in `plan`.
inline Dataset split_by_year(Dataset d, const std::map<int, Role>& plan) {
    for (int k = 0; k < d.n_days(); ++k) {
        auto it = plan.find(d.days[k].year);
        if (it == plan.end()) throw ValidationError("year " + std::to_string(d.days[k].year) + " absent from split plan");
        d.day_role[k] = it->second;
    }
    return d;
}

/// Writes the dataset as one row per (station, half-hour), grouped by half-hour.
inline void write_dataset(std::ostream& out, const Dataset& d) {
    out << "station,hh_index,date,slot,withdrawals,returns,net_demand,split\n";
    for (int day = 0; day < d.n_days(); ++day) {
        const auto date = format_date(d.days[day].date);
        const auto role = role_name(d.day_role[day]);
        for (int slot = 0; slot < kSlotsPerDay; ++slot) {
            for (int s = 0; s < d.n_stations; ++s) {
                auto i = d.index(s, day, slot);
                out << s << ',' << std::int64_t(day) * kSlotsPerDay + slot << ',' << date << ',' << slot << ','
                    << d.withdrawals[i] << ',' << d.returns[i] << ',' << d.returns[i] - d.withdrawals[i] << ','
                    << role << '\n';
            }
        }
    }
}

}  // namespace bss
