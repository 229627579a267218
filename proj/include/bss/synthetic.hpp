#pragma once

// Synthetic city used when no real logs are supplied: a station layout with
// commuter-style flows, seasonal weather, a holiday calendar, and multi-year
// trip histories sampled from known rates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "bss/core.hpp"
#include "bss/data_pipeline.hpp"
#include "bss/scenario.hpp"

namespace bss::synthetic {

struct CityParams {
    int n_stations = 20;
    double side_m = 4000.0;           // square service area
    double vehicle_speed_mps = 6.0;   // relocation vans in traffic
    double stop_overhead_s = 60.0;    // parking per visited node
    double bike_speed_mps = 4.0;
    double demand_scale = 1.0;        // multiplies every withdrawal rate
    double center_share = 0.35;       // fraction of stations in the center
    std::uint64_t seed = 7;
};

enum class StationRole : int { Residential = 0, Center = 1 };

/// Splitmix64 step: derives independent stream seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::int64_t> parts) {
    std::uint64_t h = mix_seed(master);
    for (auto p : parts) h = mix_seed(h ^ static_cast<std::uint64_t>(p));
    return h;
}

class City {
public:
    explicit City(const CityParams& p) : params_(p) {
        std::mt19937_64 rng(derive_seed(p.seed, {1}));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const int n = p.n_stations;
        const double c = p.side_m / 2;
        layout_.stations.resize(n);
        roles_.resize(n);
        base_.resize(n);
        int n_center = std::max(1, static_cast<int>(std::lround(p.center_share * n)));
        for (int k = 0; k < n; ++k) {
            auto& s = layout_.stations[k];
            s.id = k;
            bool center = k < n_center;
            roles_[k] = center ? StationRole::Center : StationRole::Residential;
            double r = center ? 0.25 * c * std::sqrt(unit(rng)) : c * (0.45 + 0.55 * std::sqrt(unit(rng)));
            double a = 2 * 3.141592653589793 * unit(rng);
            s.x_m = c + r * std::cos(a);
            s.y_m = c + r * std::sin(a);
            s.elevation_m = 120.0 + 40.0 * unit(rng);
            s.capacity = 5 + static_cast<int>(unit(rng) * 22);  // 5..26
            s.initial_stock = (s.capacity + 1) / 2;
            base_[k] = 1.0 + 1.4 * unit(rng);
        }
        const int dim = n + 1;
        layout_.graph = TravelGraph(dim);
        auto pos = [&](int i) -> std::pair<double, double> {
            if (i == n) return {c, c};
            return {layout_.stations[i].x_m, layout_.stations[i].y_m};
        };
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) {
                if (i == j) continue;
                auto [xi, yi] = pos(i);
                auto [xj, yj] = pos(j);
                double dist = std::abs(xi - xj) + std::abs(yi - yj);
                layout_.graph.set(i, j, std::round(dist / p.vehicle_speed_mps + p.stop_overhead_s), std::round(dist));
            }
    }

    const Layout& layout() const { return layout_; }
    const CityParams& params() const { return params_; }
    StationRole role(StationId s) const { return roles_[s]; }

    /// True withdrawal rate (events per half-hour) at a station for a given day and slot.
    double withdrawal_rate(const DayContext& ctx, int slot, StationId s) const {
        auto bump = [](double x, double mu, double sd) { return std::exp(-0.5 * (x - mu) * (x - mu) / (sd * sd)); };
        const double t = slot + 0.5;
        const bool center = roles_[s] == StationRole::Center;
        double shape = 0.02;  // night floor
        switch (day_type(ctx)) {
            case DayType::Working: {
                double morning = bump(t, 16.0, 1.6);  // 08:00
                double noon = bump(t, 26.5, 1.5);     // 13:15
                double evening = bump(t, 36.0, 2.0);  // 18:00
                double school = ctx.is_school_day ? 1.35 : 0.8;
                shape += (center ? 0.35 : 1.6) * morning + 0.7 * school * noon + (center ? 1.6 : 0.4) * evening;
                if (ctx.day_of_week == Weekday::Fri) shape *= 0.9;
                break;
            }
            case DayType::Saturday:
                shape += 0.8 * bump(t, 23.0, 4.0) + 0.6 * bump(t, 35.0, 3.0);
                break;
            case DayType::Sunday:
                shape += 0.55 * bump(t, 24.0, 4.5) + 0.45 * bump(t, 34.0, 3.0);
                break;
        }
        static constexpr double season[12] = {0.7, 0.75, 0.9, 1.0, 1.1, 1.1, 1.0, 0.75, 1.15, 1.05, 0.85, 0.7};
        double weather = 1.0;
        if (ctx.rain) weather *= 0.55;
        if (ctx.storm) weather *= 0.7;
        if (ctx.snow) weather *= 0.5;
        if (ctx.fog) weather *= 0.9;
        weather *= std::clamp(1.0 + 0.01 * (ctx.avg_temperature - 15.0), 0.8, 1.1);
        return params_.demand_scale * base_[s] * shape * season[ctx.month - 1] * weather;
    }

    /// Destination attractiveness by time of day; drives the commuter imbalance.
    double destination_weight(StationId from, StationId to, int slot, DayType type) const {
        const auto& g = layout_.graph;
        double w = std::exp(-g.distance(from, to) / 1800.0);
        if (from == to) w *= 0.15;
        if (type == DayType::Working) {
            const bool center = roles_[to] == StationRole::Center;
            if (slot >= 12 && slot < 21) w *= center ? 4.0 : 0.4;        // 06:00-10:30 inbound
            else if (slot >= 32 && slot < 42) w *= center ? 0.4 : 4.0;   // 16:00-21:00 outbound
        }
        return w;
    }

    /// One day of requests sampled from the true rates.
    Scenario sample_day(const DayContext& ctx, std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        const int n = layout_.size();
        const DayType type = day_type(ctx);
        Scenario sc{ctx, {}};
        std::vector<double> weights(n);
        for (StationId s = 0; s < n; ++s) {
            for (int slot = 0; slot < kSlotsPerDay; ++slot) {
                int count = std::poisson_distribution<int>(withdrawal_rate(ctx, slot, s))(rng);
                if (count == 0) continue;
                for (int d = 0; d < n; ++d) weights[d] = destination_weight(s, d, slot, type);
                std::discrete_distribution<int> pick(weights.begin(), weights.end());
                for (int k = 0; k < count; ++k) {
                    int t = slot * kSlotSeconds + static_cast<int>(std::uniform_int_distribution<int>(0, kSlotSeconds - 1)(rng));
                    int dest = pick(rng);
                    double dist = layout_.graph.distance(s, dest);
                    double ride = dist / params_.bike_speed_mps + 180.0 * std::exp(std::normal_distribution<double>(0.0, 0.5)(rng));
                    sc.events.push_back({t, s, dest, std::max(60, static_cast<int>(std::lround(ride)))});
                }
            }
        }
        sort_events(sc.events);
        return sc;
    }

private:
    CityParams params_;
    Layout layout_;
    std::vector<StationRole> roles_;
    std::vector<double> base_;
};

inline bool is_holiday(Date d) {
    std::chrono::year_month_day ymd{d};
    unsigned m = static_cast<unsigned>(ymd.month()), day = static_cast<unsigned>(ymd.day());
    static constexpr std::pair<unsigned, unsigned> fixed[] = {{1, 1},  {1, 6},   {4, 25},  {5, 1},  {6, 2},
                                                              {8, 15}, {11, 1}, {12, 8}, {12, 25}, {12, 26}};
    for (auto [fm, fd] : fixed)
        if (m == fm && day == fd) return true;
    return false;
}

/// Main school holidays: mid-June to early September and the new-year fortnight.
inline bool is_school_day(Date d) {
    std::chrono::year_month_day ymd{d};
    unsigned m = static_cast<unsigned>(ymd.month()), day = static_cast<unsigned>(ymd.day());
    if ((m == 6 && day >= 10) || m == 7 || m == 8 || (m == 9 && day < 10)) return false;
    if ((m == 12 && day >= 23) || (m == 1 && day <= 7)) return false;
    return true;
}

/// Seasonal synthetic weather and the holiday calendar for [first, last].
inline std::vector<DayContext> make_calendar(Date first, Date last, std::uint64_t seed) {
    std::vector<DayContext> out;
    for (Date d = first; d <= last; d += std::chrono::days{1}) {
        std::mt19937_64 rng(derive_seed(seed, {2, (d - Date{}).count()}));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::chrono::year_month_day ymd{d};
        int month = static_cast<int>(static_cast<unsigned>(ymd.month()));
        double phase = 2 * 3.141592653589793 * (month - 7.5) / 12.0;
        WeatherDay w;
        w.avg_temp_c = 14.0 + 10.0 * std::cos(phase) + std::normal_distribution<double>(0.0, 3.0)(rng);
        w.avg_wind_kmh = std::max(0.0, 7.0 + std::normal_distribution<double>(0.0, 3.0)(rng));
        static constexpr double rain_p[12] = {.18, .17, .2, .3, .3, .22, .15, .18, .2, .3, .32, .22};
        w.rain = unit(rng) < rain_p[month - 1];
        w.fog = (month <= 2 || month >= 11) && unit(rng) < 0.2;
        w.snow = (month <= 2 || month == 12) && w.avg_temp_c < 3.0 && unit(rng) < 0.3;
        w.storm = (month >= 5 && month <= 9) && w.rain && unit(rng) < 0.3;
        CalendarDay c{is_holiday(d), is_school_day(d)};
        out.push_back(make_day_context(d, first, w, c));
    }
    return out;
}

/// Trip history sampled day by day from the city's true rates.
inline std::vector<TripRecord> sample_history(const City& city, const std::vector<DayContext>& days, std::uint64_t seed) {
    std::vector<TripRecord> trips;
    for (const auto& ctx : days) {
        auto sc = city.sample_day(ctx, derive_seed(seed, {3, (ctx.date - Date{}).count()}));
        auto t = scenario_trips(sc);
        trips.insert(trips.end(), t.begin(), t.end());
    }
    return trips;
}

}  // namespace bss::synthetic
