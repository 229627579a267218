#pragma once

// Domain types shared by every module plus half-hour time indexing.

#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bss {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input data or configuration (CLI exit code 2).
class ValidationError : public Error {
public:
    using Error::Error;
};

inline constexpr int kSlotsPerDay = 48;
inline constexpr int kSlotSeconds = 1800;
inline constexpr int kDaySeconds = 86400;
/// 52 weeks expressed in half-hours (364 days).
inline constexpr std::int64_t kYearLagSlots = 364 * kSlotsPerDay;

using Date = std::chrono::sys_days;
using StationId = int;

struct Timestamp {
    Date day;
    int seconds = 0;  // seconds into the day, [0, 86400)

    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

struct HalfHourIndex {
    std::int64_t index = 0;

    constexpr std::int64_t day_offset() const { return index / kSlotsPerDay; }
    constexpr int slot() const { return static_cast<int>(index % kSlotsPerDay); }
    friend constexpr auto operator<=>(const HalfHourIndex&, const HalfHourIndex&) = default;
};

inline Date make_date(int y, unsigned m, unsigned d) {
    return Date{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

namespace detail {

inline int parse_int(std::string_view s, std::string_view what) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ValidationError("bad " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

}  // namespace detail

/// Parses `YYYY-MM-DD`.
inline Date parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-')
        throw ValidationError("bad date: '" + std::string(s) + "'");
    int y = detail::parse_int(s.substr(0, 4), "date");
    int m = detail::parse_int(s.substr(5, 2), "date");
    int d = detail::parse_int(s.substr(8, 2), "date");
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                    std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw ValidationError("bad date: '" + std::string(s) + "'");
    return Date{ymd};
}

/// Parses `YYYY-MM-DDTHH:MM:SS` (a space separator is accepted too).
inline Timestamp parse_timestamp(std::string_view s) {
    if (s.size() != 19 || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':')
        throw ValidationError("bad timestamp: '" + std::string(s) + "'");
    Timestamp t;
    t.day = parse_date(s.substr(0, 10));
    int hh = detail::parse_int(s.substr(11, 2), "timestamp");
    int mm = detail::parse_int(s.substr(14, 2), "timestamp");
    int ss = detail::parse_int(s.substr(17, 2), "timestamp");
    if (hh > 23 || mm > 59 || ss > 59) throw ValidationError("bad timestamp: '" + std::string(s) + "'");
    t.seconds = hh * 3600 + mm * 60 + ss;
    return t;
}

inline std::string format_date(Date d) {
    std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

inline std::string format_timestamp(const Timestamp& t) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "T%02d:%02d:%02d", t.seconds / 3600, t.seconds / 60 % 60, t.seconds % 60);
    return format_date(t.day) + buf;
}

/// Adds a (possibly multi-day) offset in seconds to a timestamp.
inline Timestamp add_seconds(Timestamp t, std::int64_t s) {
    std::int64_t total = t.seconds + s;
    std::int64_t days = total >= 0 ? total / kDaySeconds : -((-total + kDaySeconds - 1) / kDaySeconds);
    t.day += std::chrono::days{days};
    t.seconds = static_cast<int>(total - days * kDaySeconds);
    return t;
}

inline std::int64_t seconds_between(const Timestamp& a, const Timestamp& b) {
    return (b.day - a.day).count() * std::int64_t{kDaySeconds} + (b.seconds - a.seconds);
}

inline HalfHourIndex hh_index(const Timestamp& t, Date epoch) {
    auto days = (t.day - epoch).count();
    if (days < 0) throw Error("pre-epoch timestamp: " + format_timestamp(t));
    return HalfHourIndex{days * kSlotsPerDay + t.seconds / kSlotSeconds};
}

inline int slot_of_day(HalfHourIndex h) { return h.slot(); }

/// Start of the half-hour `h` as a timestamp.
inline Timestamp slot_start(HalfHourIndex h, Date epoch) {
    return Timestamp{epoch + std::chrono::days{h.day_offset()}, h.slot() * kSlotSeconds};
}

// ---------------------------------------------------------------------------
// Calendar and weather context

enum class Weekday : int { Mon = 0, Tue, Wed, Thu, Fri, Sat, Sun };

inline Weekday weekday_of(Date d) {
    // ISO encoding: Monday = 1 ... Sunday = 7.
    return static_cast<Weekday>(std::chrono::weekday{d}.iso_encoding() - 1);
}

struct DayContext {
    Date date{};
    Weekday day_of_week = Weekday::Mon;
    int day_of_month = 1;
    int month = 1;
    int year = 1970;
    int week_index = 0;
    bool is_public_holiday = false;
    bool is_school_day = true;
    double avg_temperature = 15.0;  // °C
    double avg_wind_speed = 5.0;    // km/h
    bool fog = false;
    bool rain = false;
    bool snow = false;
    bool storm = false;
};

struct WeatherDay {
    double avg_temp_c = 15.0;
    double avg_wind_kmh = 5.0;
    bool fog = false;
    bool rain = false;
    bool snow = false;
    bool storm = false;
};

struct CalendarDay {
    bool public_holiday = false;
    bool school_day = true;
};

inline DayContext make_day_context(Date date, Date epoch, const WeatherDay& w, const CalendarDay& c) {
    std::chrono::year_month_day ymd{date};
    DayContext ctx;
    ctx.date = date;
    ctx.day_of_week = weekday_of(date);
    ctx.day_of_month = static_cast<int>(static_cast<unsigned>(ymd.day()));
    ctx.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
    ctx.year = static_cast<int>(ymd.year());
    ctx.week_index = static_cast<int>((date - epoch).count() / 7);
    ctx.is_public_holiday = c.public_holiday;
    ctx.is_school_day = c.school_day;
    ctx.avg_temperature = w.avg_temp_c;
    ctx.avg_wind_speed = w.avg_wind_kmh;
    ctx.fog = w.fog;
    ctx.rain = w.rain;
    ctx.snow = w.snow;
    ctx.storm = w.storm;
    return ctx;
}

/// Operator day type. Public holidays behave like Sundays.
enum class DayType : int { Working = 0, Saturday = 1, Sunday = 2 };

inline DayType day_type(const DayContext& ctx) {
    if (ctx.is_public_holiday || ctx.day_of_week == Weekday::Sun) return DayType::Sunday;
    if (ctx.day_of_week == Weekday::Sat) return DayType::Saturday;
    return DayType::Working;
}

// ---------------------------------------------------------------------------
// Feature vector

/// Fixed feature order used by every tree model and by serialized models.
enum class Feature : int {
    SlotOfDay = 0,
    DayOfMonth,
    DayOfWeek,
    Month,
    WeekIndex,
    Station,
    AvgTemperature,
    AvgWindSpeed,
    PublicHoliday,
    SchoolDay,
    Fog,
    Rain,
    Snow,
    Storm,
};

inline constexpr int kFeatureCount = 14;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "slot_of_day", "day_of_month", "day_of_week", "month",  "week_index", "station", "avg_temperature",
    "avg_wind_speed", "public_holiday", "school_day", "fog", "rain", "snow", "storm"};

inline constexpr std::string_view feature_name(Feature f) { return kFeatureNames[static_cast<int>(f)]; }

/// Categorical features are split on code sets; the rest on thresholds.
inline constexpr bool is_categorical(Feature f) {
    switch (f) {
        case Feature::SlotOfDay:
        case Feature::DayOfMonth:
        case Feature::DayOfWeek:
        case Feature::Month:
        case Feature::Station:
            return true;
        default:
            return false;
    }
}

struct FeatureVector {
    std::array<double, kFeatureCount> values{};

    double operator[](Feature f) const { return values[static_cast<int>(f)]; }
    double& operator[](Feature f) { return values[static_cast<int>(f)]; }
};

/// `station` < 0 leaves the station feature at 0 (local datasets).
inline FeatureVector make_features(const DayContext& ctx, int slot, StationId station = -1) {
    FeatureVector x;
    x[Feature::SlotOfDay] = slot;
    x[Feature::DayOfMonth] = ctx.day_of_month;
    x[Feature::DayOfWeek] = static_cast<int>(ctx.day_of_week);
    x[Feature::Month] = ctx.month;
    x[Feature::WeekIndex] = ctx.week_index;
    x[Feature::Station] = station < 0 ? 0 : station;
    x[Feature::AvgTemperature] = ctx.avg_temperature;
    x[Feature::AvgWindSpeed] = ctx.avg_wind_speed;
    x[Feature::PublicHoliday] = ctx.is_public_holiday;
    x[Feature::SchoolDay] = ctx.is_school_day;
    x[Feature::Fog] = ctx.fog;
    x[Feature::Rain] = ctx.rain;
    x[Feature::Snow] = ctx.snow;
    x[Feature::Storm] = ctx.storm;
    return x;
}

// ---------------------------------------------------------------------------
// Setting: layout + fleet

struct Station {
    StationId id = 0;
    int capacity = 1;
    int initial_stock = 0;
    double x_m = 0.0;
    double y_m = 0.0;
    double elevation_m = 0.0;
};

/// Square travel matrices over stations plus the depot (last index).
struct TravelGraph {
    int dim = 0;
    std::vector<double> time_s;      // row-major dim × dim
    std::vector<double> distance_m;  // row-major dim × dim

    TravelGraph() = default;
    explicit TravelGraph(int n) : dim(n), time_s(std::size_t(n) * n, 0.0), distance_m(std::size_t(n) * n, 0.0) {}

    double time(int from, int to) const { return time_s[std::size_t(from) * dim + to]; }
    double distance(int from, int to) const { return distance_m[std::size_t(from) * dim + to]; }
    void set(int from, int to, double seconds, double meters) {
        time_s[std::size_t(from) * dim + to] = seconds;
        distance_m[std::size_t(from) * dim + to] = meters;
    }
};

struct Layout {
    std::vector<Station> stations;
    TravelGraph graph;

    int size() const { return static_cast<int>(stations.size()); }
    int depot() const { return size(); }
    int total_initial_stock() const {
        int s = 0;
        for (const auto& st : stations) s += st.initial_stock;
        return s;
    }
};

struct Shift {
    int start = 0;  // seconds from midnight
    int end = kDaySeconds;

    int length() const { return end - start; }
};

struct Vehicle {
    int id = 0;
    int capacity = 14;
    Shift shift;
    std::optional<StationId> start_station;  // unset: the depot
};

struct Fleet {
    std::vector<Vehicle> vehicles;
};

/// Every violated invariant, with station ids. Empty means the layout is valid.
inline std::vector<std::string> validate_layout(const Layout& l) {
    std::vector<std::string> out;
    const int n = l.size();
    for (int k = 0; k < n; ++k) {
        const auto& s = l.stations[k];
        if (s.id != k) out.push_back("station id " + std::to_string(s.id) + " at position " + std::to_string(k) + " is not dense");
        if (s.capacity < 1) out.push_back("capacity below 1 at station " + std::to_string(k));
        if (s.initial_stock < 0) out.push_back("negative stock at station " + std::to_string(k));
        if (s.initial_stock > s.capacity) out.push_back("stock exceeds capacity at station " + std::to_string(k));
    }
    if (l.graph.dim != n + 1 || l.graph.time_s.size() != std::size_t(l.graph.dim) * l.graph.dim ||
        l.graph.distance_m.size() != l.graph.time_s.size()) {
        out.push_back("graph dimension " + std::to_string(l.graph.dim) + " does not match " + std::to_string(n) +
                      " stations plus depot");
        return out;
    }
    for (int i = 0; i < l.graph.dim; ++i) {
        for (int j = 0; j < l.graph.dim; ++j) {
            double t = l.graph.time(i, j), d = l.graph.distance(i, j);
            if (t < 0) out.push_back("negative travel time " + std::to_string(i) + "->" + std::to_string(j));
            if (d < 0) out.push_back("negative distance " + std::to_string(i) + "->" + std::to_string(j));
            if (i == j && (t != 0 || d != 0)) out.push_back("non-zero diagonal at node " + std::to_string(i));
        }
    }
    return out;
}

inline void validate_shift(const Shift& s) {
    if (!(0 <= s.start && s.start < s.end && s.end <= kDaySeconds))
        throw ValidationError("invalid shift [" + std::to_string(s.start) + ", " + std::to_string(s.end) + ")");
}

}  // namespace bss
