#pragma once

// Daily user-request scenarios: replayed from trip logs or sampled from
// piecewise-constant-rate Poisson processes fitted to a dataset.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "bss/core.hpp"
#include "bss/csv.hpp"
#include "bss/data_pipeline.hpp"

namespace bss {

struct TripEvent {
    int request_time = 0;  // seconds from midnight
    StationId origin = 0;
    StationId destination = 0;
    int duration = 1;  // seconds

    friend auto operator<=>(const TripEvent&, const TripEvent&) = default;
};

struct Scenario {
    DayContext date_ctx;
    std::vector<TripEvent> events;
};

inline void sort_events(std::vector<TripEvent>& ev) {
    std::sort(ev.begin(), ev.end(), [](const TripEvent& a, const TripEvent& b) {
        return std::tie(a.request_time, a.origin, a.destination, a.duration) <
               std::tie(b.request_time, b.origin, b.destination, b.duration);
    });
}

/// Every trip withdrawn on `date` becomes one event; overnight trips keep their full duration.
inline Scenario replay_scenario(const std::vector<TripRecord>& trips, Date date, const DayContext& ctx) {
    Scenario sc{ctx, {}};
    for (const auto& t : trips) {
        if (t.withdrawal_time.day != date) continue;
        auto dur = seconds_between(t.withdrawal_time, t.return_time);
        sc.events.push_back({t.withdrawal_time.seconds, t.origin, t.destination, static_cast<int>(std::max<std::int64_t>(1, dur))});
    }
    sort_events(sc.events);
    return sc;
}

/// Inverse of replay: the trips a scenario implies, dated on its day.
inline std::vector<TripRecord> scenario_trips(const Scenario& sc) {
    std::vector<TripRecord> out;
    out.reserve(sc.events.size());
    for (const auto& e : sc.events) {
        Timestamp w{sc.date_ctx.date, e.request_time};
        out.push_back({w, e.origin, add_seconds(w, e.duration), e.destination});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rate profile

/// Day class used to condition rates: day type × rain, optionally × month.
inline int day_class(const DayContext& ctx, bool by_month) {
    int c = static_cast<int>(day_type(ctx)) * 2 + (ctx.rain ? 1 : 0);
    return by_month ? (ctx.month - 1) * 6 + c : c;
}

struct RateProfile {
    int n_stations = 0;
    bool by_month = false;
    // [class][slot][station], events per half-hour
    std::vector<double> withdrawal;
    std::vector<double> ret;

    RateProfile() = default;
    RateProfile(int n, bool month)
        : n_stations(n),
          by_month(month),
          withdrawal(std::size_t(n_classes()) * kSlotsPerDay * n, 0.0),
          ret(withdrawal.size(), 0.0) {}

    int n_classes() const { return by_month ? 72 : 6; }
    std::size_t index(int cls, int slot, StationId s) const {
        return (std::size_t(cls) * kSlotsPerDay + slot) * n_stations + s;
    }
    double lambda_w(const DayContext& ctx, int slot, StationId s) const {
        return withdrawal[index(day_class(ctx, by_month), slot, s)];
    }
    double lambda_r(const DayContext& ctx, int slot, StationId s) const {
        return ret[index(day_class(ctx, by_month), slot, s)];
    }
};

/// Mean withdrawals/returns per (class, slot, station) over the given days
/// (all days when `days` is empty). Classes without days keep rate 0.
inline RateProfile fit_rates(const Dataset& d, const std::vector<int>& days = {}, bool by_month = false) {
    if (d.n_days() == 0) throw ValidationError("fit_rates: empty dataset");
    RateProfile r(d.n_stations, by_month);
    std::vector<int> count(r.n_classes(), 0);
    auto add_day = [&](int day) {
        int cls = day_class(d.days[day], by_month);
        ++count[cls];
        for (int slot = 0; slot < kSlotsPerDay; ++slot)
            for (int s = 0; s < d.n_stations; ++s) {
                auto i = d.index(s, day, slot);
                r.withdrawal[r.index(cls, slot, s)] += d.withdrawals[i];
                r.ret[r.index(cls, slot, s)] += d.returns[i];
            }
    };
    if (days.empty())
        for (int day = 0; day < d.n_days(); ++day) add_day(day);
    else
        for (int day : days) add_day(day);
    for (int cls = 0; cls < r.n_classes(); ++cls) {
        if (count[cls] == 0) continue;
        for (int slot = 0; slot < kSlotsPerDay; ++slot)
            for (int s = 0; s < d.n_stations; ++s) {
                r.withdrawal[r.index(cls, slot, s)] /= count[cls];
                r.ret[r.index(cls, slot, s)] /= count[cls];
            }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Destination / duration model

/// Per (origin, slot band): destination distribution and duration quantiles.
class ODModel {
public:
    static constexpr int kQuantiles = 11;  // 0, 0.1, ..., 1.0

    ODModel() = default;
    ODModel(int n_stations, int n_bands)
        : n_(n_stations), bands_(n_bands), cells_(std::size_t(n_stations) * n_bands) {
        if (n_bands < 1 || kSlotsPerDay % n_bands != 0)
            throw ValidationError("slot band count must divide 48");
    }

    int n_stations() const { return n_; }
    int n_bands() const { return bands_; }
    int band_of(int slot) const { return slot / (kSlotsPerDay / bands_); }

    /// Estimates the model from trips; cells without trips fall back to the
    /// origin's all-day pattern, then to the system-wide pattern.
    static ODModel fit(const std::vector<TripRecord>& trips, int n_stations, int n_bands = 8) {
        ODModel m(n_stations, n_bands);
        std::vector<std::vector<double>> counts(m.cells_.size(), std::vector<double>(n_stations, 0.0));
        std::vector<std::vector<double>> durs(m.cells_.size());
        for (const auto& t : trips) {
            auto c = m.cell(t.origin, m.band_of(t.withdrawal_time.seconds / kSlotSeconds));
            counts[c][t.destination] += 1.0;
            durs[c].push_back(double(std::max<std::int64_t>(1, seconds_between(t.withdrawal_time, t.return_time))));
        }
        for (std::size_t c = 0; c < m.cells_.size(); ++c) m.cells_[c] = make_cell(counts[c], durs[c]);
        m.fill_fallbacks();
        return m;
    }

    /// Builds the model from explicit per-cell destination weights and durations.
    void set_cell(StationId origin, int band, std::vector<double> dest_weights, std::vector<double> durations) {
        cells_.at(cell(origin, band)) = make_cell(dest_weights, durations);
    }
    void fill_fallbacks() {
        // Origin-level pooled cells, then a global pooled cell.
        Cell global;
        std::vector<double> gw(n_, 0.0), gd;
        for (int o = 0; o < n_; ++o) {
            std::vector<double> ow(n_, 0.0), od;
            for (int b = 0; b < bands_; ++b) {
                const auto& c = cells_[cell(o, b)];
                if (c.empty()) continue;
                for (int d = 0; d < n_; ++d) ow[d] += c.mass[d];
                od.insert(od.end(), c.quantiles.begin(), c.quantiles.end());
            }
            for (int d = 0; d < n_; ++d) gw[d] += ow[d];
            gd.insert(gd.end(), od.begin(), od.end());
            Cell pooled = make_cell(ow, od);
            for (int b = 0; b < bands_; ++b)
                if (cells_[cell(o, b)].empty() && !pooled.empty()) cells_[cell(o, b)] = pooled;
        }
        global = make_cell(gw, gd);
        if (global.empty()) {
            std::vector<double> uniform(n_, 1.0);
            global = make_cell(uniform, {kDefaultDuration});
        }
        for (auto& c : cells_)
            if (c.empty()) c = global;
    }

    /// Probability of `dest` given (origin, band).
    double probability(StationId origin, int band, StationId dest) const {
        const auto& c = cells_.at(cell(origin, band));
        double prev = dest == 0 ? 0.0 : c.cumulative[dest - 1];
        return c.cumulative[dest] - prev;
    }

    template <class Rng>
    StationId sample_destination(StationId origin, int slot, Rng& rng) const {
        const auto& c = cells_[cell(origin, band_of(slot))];
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        auto it = std::upper_bound(c.cumulative.begin(), c.cumulative.end(), u);
        if (it == c.cumulative.end()) --it;
        // Skip zero-mass entries reached through rounding at the top end.
        auto idx = static_cast<StationId>(it - c.cumulative.begin());
        while (idx > 0 && c.mass[idx] == 0.0) --idx;
        return idx;
    }

    template <class Rng>
    int sample_duration(StationId origin, int slot, Rng& rng) const {
        const auto& q = cells_[cell(origin, band_of(slot))].quantiles;
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * (kQuantiles - 1);
        int lo = std::min(static_cast<int>(u), kQuantiles - 2);
        double v = q[lo] + (u - lo) * (q[lo + 1] - q[lo]);
        return std::max(1, static_cast<int>(std::lround(v)));
    }

private:
    static constexpr double kDefaultDuration = 900.0;

    struct Cell {
        std::vector<double> mass;        // normalized
        std::vector<double> cumulative;  // in station id order
        std::vector<double> quantiles;   // kQuantiles entries
        bool empty() const { return mass.empty(); }
    };

    std::size_t cell(StationId origin, int band) const { return std::size_t(origin) * bands_ + band; }

    static Cell make_cell(const std::vector<double>& weights, std::vector<double> durations) {
        Cell c;
        double total = 0;
        for (double w : weights) total += w;
        if (total <= 0 || durations.empty()) return c;
        c.mass.resize(weights.size());
        c.cumulative.resize(weights.size());
        double acc = 0;
        for (std::size_t d = 0; d < weights.size(); ++d) {
            c.mass[d] = weights[d] / total;
            acc += c.mass[d];
            c.cumulative[d] = acc;
        }
        c.cumulative.back() = 1.0;
        std::sort(durations.begin(), durations.end());
        c.quantiles.resize(kQuantiles);
        for (int k = 0; k < kQuantiles; ++k) {
            double pos = (durations.size() - 1) * (k / double(kQuantiles - 1));
            auto lo = static_cast<std::size_t>(pos);
            auto hi = std::min(lo + 1, durations.size() - 1);
            c.quantiles[k] = durations[lo] + (pos - lo) * (durations[hi] - durations[lo]);
        }
        return c;
    }

    int n_ = 0;
    int bands_ = 8;
    std::vector<Cell> cells_;
};

/// Samples withdrawals per (station, slot) as Poisson counts with uniform
/// times inside the slot; destinations and durations come from `od`.
/// `rates_at(slot, station)` returns the withdrawal rate for the day.
template <class RateFn>
std::vector<TripEvent> sample_events(int n_stations, RateFn&& rates_at, const ODModel& od, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TripEvent> events;
    for (StationId s = 0; s < n_stations; ++s) {
        for (int slot = 0; slot < kSlotsPerDay; ++slot) {
            double lambda = rates_at(slot, s);
            if (lambda <= 0) continue;
            int n = std::poisson_distribution<int>(lambda)(rng);
            for (int k = 0; k < n; ++k) {
                int t = slot * kSlotSeconds +
                        std::min(kSlotSeconds - 1, static_cast<int>(std::uniform_real_distribution<double>(0.0, 1.0)(rng) * kSlotSeconds));
                StationId dest = od.sample_destination(s, slot, rng);
                int dur = od.sample_duration(s, slot, rng);
                events.push_back({t, s, dest, dur});
            }
        }
    }
    sort_events(events);
    return events;
}

inline Scenario sample_scenario(const RateProfile& rates, const ODModel& od, const DayContext& ctx, std::uint64_t seed) {
    if (od.n_stations() != rates.n_stations) throw ValidationError("rate profile and OD model disagree on station count");
    Scenario sc{ctx, {}};
    sc.events = sample_events(
        rates.n_stations, [&](int slot, StationId s) { return rates.lambda_w(ctx, slot, s); }, od, seed);
    return sc;
}

/// Realized per-slot net demand implied by a scenario, assuming every request is served.
/// Layout: [slot][station].
inline std::vector<double> scenario_net_demand(const Scenario& sc, int n_stations) {
    std::vector<double> net(std::size_t(kSlotsPerDay) * n_stations, 0.0);
    for (const auto& e : sc.events) {
        net[std::size_t(e.request_time / kSlotSeconds) * n_stations + e.origin] -= 1.0;
        int back = e.request_time + e.duration;
        if (back < kDaySeconds) net[std::size_t(back / kSlotSeconds) * n_stations + e.destination] += 1.0;
    }
    return net;
}

// ---------------------------------------------------------------------------
// scenario.csv / context.csv

inline constexpr std::string_view kScenarioHeader = "request_time_s,origin,destination,duration_s";
inline constexpr std::string_view kContextHeader =
    "date,day_of_week,day_of_month,month,week_index,public_holiday,school_day,avg_temp_c,avg_wind_kmh,fog,rain,snow,storm";

inline void write_scenario(std::ostream& events, std::ostream& context, const Scenario& sc) {
    events << kScenarioHeader << '\n';
    for (const auto& e : sc.events)
        events << e.request_time << ',' << e.origin << ',' << e.destination << ',' << e.duration << '\n';
    const auto& c = sc.date_ctx;
    context << kContextHeader << '\n'
            << format_date(c.date) << ',' << static_cast<int>(c.day_of_week) << ',' << c.day_of_month << ','
            << c.month << ',' << c.week_index << ',' << c.is_public_holiday << ',' << c.is_school_day << ','
            << csv::num(c.avg_temperature) << ',' << csv::num(c.avg_wind_speed) << ',' << c.fog << ',' << c.rain
            << ',' << c.snow << ',' << c.storm << '\n';
}

inline Scenario read_scenario(std::istream& events, std::istream& context, const std::string& name = "scenario.csv") {
    Scenario sc;
    std::string line;
    if (!csv::expect_header(context, kContextHeader, "context.csv") || !csv::getline_clean(context, line))
        throw ValidationError("context.csv: missing row");
    auto f = csv::split(line);
    if (f.size() != 13) throw ValidationError("context.csv: expected 13 fields");
    const std::string at = "context.csv:2";
    auto& c = sc.date_ctx;
    c.date = parse_date(f[0]);
    c.day_of_week = static_cast<Weekday>(csv::to_int(f[1], at));
    c.day_of_month = static_cast<int>(csv::to_int(f[2], at));
    c.month = static_cast<int>(csv::to_int(f[3], at));
    c.year = static_cast<int>(std::chrono::year_month_day{c.date}.year());
    c.week_index = static_cast<int>(csv::to_int(f[4], at));
    c.is_public_holiday = csv::to_flag(f[5], at);
    c.is_school_day = csv::to_flag(f[6], at);
    c.avg_temperature = csv::to_double(f[7], at);
    c.avg_wind_speed = csv::to_double(f[8], at);
    c.fog = csv::to_flag(f[9], at);
    c.rain = csv::to_flag(f[10], at);
    c.snow = csv::to_flag(f[11], at);
    c.storm = csv::to_flag(f[12], at);

    if (!csv::expect_header(events, kScenarioHeader, name)) return sc;
    std::size_t lineno = 1;
    while (csv::getline_clean(events, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto g = csv::split(line);
        const auto where = csv::where(name, lineno);
        if (g.size() != 4) throw ValidationError(where + ": expected 4 fields");
        TripEvent e{static_cast<int>(csv::to_int(g[0], where)), static_cast<StationId>(csv::to_int(g[1], where)),
                    static_cast<StationId>(csv::to_int(g[2], where)), static_cast<int>(csv::to_int(g[3], where))};
        if (e.request_time < 0 || e.request_time >= kDaySeconds || e.duration <= 0)
            throw ValidationError(where + ": request time or duration out of range");
        sc.events.push_back(e);
    }
    sort_events(sc.events);
    return sc;
}

}  // namespace bss
