#pragma once

// Net-demand forecasters (52-week shift, reference-day table, CART, random
// forest, gradient boosting) in global and local variants; MSE and gap
// metrics; split-count feature importance; model files; forecast.csv.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "bss/core.hpp"
#include "bss/csv.hpp"
#include "bss/data_pipeline.hpp"
#include "bss/parallel.hpp"
#include "bss/stats.hpp"
#include "bss/tree.hpp"

namespace bss {

enum class Family : int { HistoricalShifted = 0, ReferenceDay, Cart, RandomForest, GradientBoosting };
enum class Approach : int { Global = 0, Local };

inline std::string_view family_name(Family f) {
    switch (f) {
        case Family::HistoricalShifted: return "hs";
        case Family::ReferenceDay: return "cm";
        case Family::Cart: return "cart";
        case Family::RandomForest: return "rf";
        case Family::GradientBoosting: return "gb";
    }
    return "?";
}

inline Family parse_family(std::string_view s) {
    for (auto f : {Family::HistoricalShifted, Family::ReferenceDay, Family::Cart, Family::RandomForest,
                   Family::GradientBoosting})
        if (family_name(f) == s) return f;
    throw ValidationError("unknown model family '" + std::string(s) + "'");
}

inline bool is_tree_family(Family f) {
    return f == Family::Cart || f == Family::RandomForest || f == Family::GradientBoosting;
}

/// One hyperparameter point. Fields a family does not use are ignored.
struct Hyper {
    int n_estimators = 100;
    int max_depth = 6;
    int min_samples_leaf = 1;
    double learning_rate = 0.1;
    double subsample_fraction = 1.0;
    double feature_fraction = 1.0;
    bool bootstrap = true;

    friend bool operator==(const Hyper&, const Hyper&) = default;
};

/// Tuning grid. Enumeration order (outermost first): n_estimators, max_depth,
/// learning_rate, subsample_fraction, feature_fraction, min_samples_leaf.
/// The first point with the lowest validation MSE wins.
struct HyperGrid {
    std::vector<int> n_estimators{50, 100, 200};
    std::vector<int> max_depth{4, 6, 8};
    std::vector<double> learning_rate{0.05, 0.1};
    std::vector<double> subsample_fraction{0.8, 1.0};
    std::vector<double> feature_fraction{0.8, 1.0};
    std::vector<int> min_samples_leaf{1};
    double forest_feature_fraction = 0.5;
    bool bootstrap = true;

    static HyperGrid single(const Hyper& h) {
        HyperGrid g;
        g.n_estimators = {h.n_estimators};
        g.max_depth = {h.max_depth};
        g.learning_rate = {h.learning_rate};
        g.subsample_fraction = {h.subsample_fraction};
        g.feature_fraction = {h.feature_fraction};
        g.min_samples_leaf = {h.min_samples_leaf};
        g.forest_feature_fraction = h.feature_fraction;
        g.bootstrap = h.bootstrap;
        return g;
    }

    std::vector<Hyper> points(Family f) const {
        std::vector<Hyper> out;
        auto or_default = [](const auto& v, auto d) { return v.empty() ? std::vector{d} : v; };
        const auto ne = f == Family::Cart ? std::vector<int>{1} : or_default(n_estimators, 100);
        const auto lr = f == Family::GradientBoosting ? or_default(learning_rate, 0.1) : std::vector<double>{0.0};
        const auto ss = f == Family::GradientBoosting ? or_default(subsample_fraction, 1.0) : std::vector<double>{1.0};
        const auto ff = f == Family::GradientBoosting ? or_default(feature_fraction, 1.0)
                        : f == Family::RandomForest   ? std::vector<double>{forest_feature_fraction}
                                                      : std::vector<double>{1.0};
        for (int a : ne)
            for (int d : or_default(max_depth, 6))
                for (double l : lr)
                    for (double s : ss)
                        for (double q : ff)
                            for (int m : or_default(min_samples_leaf, 1))
                                out.push_back(Hyper{a, d, m, l, s, q, bootstrap});
        return out;
    }
};

struct ModelSpec {
    Family family = Family::GradientBoosting;
    Approach approach = Approach::Local;
    HyperGrid grid;
    std::uint64_t seed = 1;
    bool reference_complete_missing = true;  // fill empty reference-table cells from neighbours

    std::string name() const {
        std::string n(family_name(family));
        if (is_tree_family(family)) n += approach == Approach::Global ? "-global" : "-local";
        return n;
    }
};

/// Parses names like "hs", "cm", "gb-local", "rf-global", "cart-local".
inline ModelSpec parse_model_name(std::string_view s) {
    ModelSpec spec;
    auto dash = s.find('-');
    spec.family = parse_family(s.substr(0, dash));
    if (dash != std::string_view::npos) {
        auto a = s.substr(dash + 1);
        if (a == "global") spec.approach = Approach::Global;
        else if (a == "local") spec.approach = Approach::Local;
        else throw ValidationError("unknown approach '" + std::string(a) + "'");
    } else if (is_tree_family(spec.family)) {
        throw ValidationError("tree model '" + std::string(s) + "' needs -global or -local");
    }
    return spec;
}

/// Net demand lagged 52 weeks, read from the observed history.
struct HistoryTable {
    Date epoch{};
    int n_stations = 0;
    int n_days = 0;
    std::vector<std::int32_t> net;  // [day][slot][station]
};

struct ReferenceKey {
    DayType type = DayType::Working;
    int month = 1;
    bool rainy = false;

    friend auto operator<=>(const ReferenceKey&, const ReferenceKey&) = default;
};

inline std::string to_string(const ReferenceKey& k) {
    static constexpr const char* types[] = {"working", "saturday", "sunday"};
    return std::string("(") + types[static_cast<int>(k.type)] + ", month " + std::to_string(k.month) + ", " +
           (k.rainy ? "rainy" : "sunny") + ")";
}

struct ReferenceProfile {
    Date day{};                // the reference day
    std::vector<double> net;   // [slot][station]
};

struct ReferenceTable {
    int n_stations = 0;
    std::map<ReferenceKey, ReferenceProfile> cells;
};

struct TreeSet {
    std::vector<ml::Ensemble> models;  // one (global) or one per station (local)
};

class ForecastModel {
public:
    using State = std::variant<HistoryTable, ReferenceTable, TreeSet>;

    ForecastModel() = default;
    ForecastModel(ModelSpec spec, Hyper chosen, State state)
        : spec_(std::move(spec)), hyper_(chosen), state_(std::move(state)) {}

    const ModelSpec& spec() const { return spec_; }
    const Hyper& hyper() const { return hyper_; }
    const State& state() const { return state_; }

    /// Real-valued prediction. `h` is relative to the dataset epoch the model saw.
    double predict(const FeatureVector& x, StationId station, HalfHourIndex h) const {
        return std::visit(
            [&](const auto& st) -> double {
                using T = std::decay_t<decltype(st)>;
                if constexpr (std::is_same_v<T, HistoryTable>) {
                    auto lag = h.index - kYearLagSlots;
                    if (lag < 0 || lag >= std::int64_t(st.n_days) * kSlotsPerDay)
                        throw Error("insufficient history for half-hour " + std::to_string(h.index));
                    return st.net[std::size_t(lag) * st.n_stations + station];
                } else if constexpr (std::is_same_v<T, ReferenceTable>) {
                    return lookup(st, key_of(x), station, static_cast<int>(x[Feature::SlotOfDay]));
                } else {
                    if (spec_.approach == Approach::Global) return st.models.front().predict(x);
                    FeatureVector local = x;
                    local[Feature::Station] = 0;
                    return st.models.at(station).predict(local);
                }
            },
            state_);
    }

    bool has_history_for(HalfHourIndex h) const {
        if (const auto* st = std::get_if<HistoryTable>(&state_)) {
            auto lag = h.index - kYearLagSlots;
            return lag >= 0 && lag < std::int64_t(st->n_days) * kSlotsPerDay;
        }
        return true;
    }

    static ReferenceKey key_of(const DayContext& ctx) { return {day_type(ctx), ctx.month, ctx.rain}; }
    static ReferenceKey key_of(const FeatureVector& x) {
        DayContext c;
        c.day_of_week = static_cast<Weekday>(static_cast<int>(x[Feature::DayOfWeek]));
        c.is_public_holiday = x[Feature::PublicHoliday] != 0;
        c.month = static_cast<int>(x[Feature::Month]);
        c.rain = x[Feature::Rain] != 0;
        return key_of(c);
    }

    static double lookup(const ReferenceTable& t, const ReferenceKey& k, StationId s, int slot) {
        auto it = t.cells.find(k);
        if (it == t.cells.end()) throw Error("reference table has no day for " + to_string(k));
        return it->second.net[std::size_t(slot) * t.n_stations + s];
    }

private:
    ModelSpec spec_;
    Hyper hyper_;
    State state_;
};

inline double predict_reference_day(const ForecastModel& m, const DayContext& ctx, StationId station, int slot) {
    const auto* t = std::get_if<ReferenceTable>(&m.state());
    if (!t) throw Error("predict_reference_day needs a reference-day model");
    return ForecastModel::lookup(*t, ForecastModel::key_of(ctx), station, slot);
}

// ---------------------------------------------------------------------------
// Metrics

inline double mse(std::span<const double> pred, std::span<const double> actual) {
    if (pred.size() != actual.size()) throw Error("mse: length mismatch");
    if (pred.empty()) throw Error("mse: empty series");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double e = actual[i] - pred[i];
        s += e * e;
    }
    return s / pred.size();
}

/// Percentage gap of `value` over `best`.
inline double pct_gap(double value, double best) {
    if (!(best > 0)) throw Error("pct_gap: best must be positive");
    return 100.0 * (value - best) / best;
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline ml::FeatureMask mask_for(Approach a) {
    auto m = ml::all_features();
    if (a == Approach::Local) m[static_cast<int>(Feature::Station)] = false;
    return m;
}

struct TrainingSet {
    ml::BinnedMatrix X;
    std::vector<double> y;
};

inline TrainingSet training_rows(const Dataset& d, const std::vector<int>& days, std::optional<StationId> station) {
    std::vector<FeatureVector> rows;
    TrainingSet t;
    const int per_day = kSlotsPerDay * (station ? 1 : d.n_stations);
    rows.reserve(days.size() * per_day);
    t.y.reserve(rows.capacity());
    for (int day : days)
        for (int slot = 0; slot < kSlotsPerDay; ++slot) {
            if (station) {
                rows.push_back(make_features(d.days[day], slot, -1));
                t.y.push_back(d.net(*station, day, slot));
            } else {
                for (StationId s = 0; s < d.n_stations; ++s) {
                    rows.push_back(make_features(d.days[day], slot, s));
                    t.y.push_back(d.net(s, day, slot));
                }
            }
        }
    t.X = ml::BinnedMatrix(rows, mask_for(station ? Approach::Local : Approach::Global));
    return t;
}

inline ml::EnsembleParams ensemble_params(Family f, const Hyper& h, std::uint64_t seed) {
    ml::EnsembleParams p;
    p.kind = f == Family::Cart           ? ml::EnsembleKind::Cart
             : f == Family::RandomForest ? ml::EnsembleKind::RandomForest
                                         : ml::EnsembleKind::GradientBoosting;
    p.n_estimators = h.n_estimators;
    p.max_depth = h.max_depth;
    p.min_samples_leaf = h.min_samples_leaf;
    p.learning_rate = h.learning_rate;
    p.subsample_fraction = h.subsample_fraction;
    p.feature_fraction = h.feature_fraction;
    p.bootstrap = h.bootstrap;
    p.seed = seed;
    return p;
}

inline HistoryTable history_of(const Dataset& d) {
    HistoryTable h;
    h.epoch = d.epoch;
    h.n_stations = d.n_stations;
    h.n_days = d.n_days();
    h.net.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) h.net[i] = d.returns[i] - d.withdrawals[i];
    return h;
}

inline ReferenceTable reference_table(const Dataset& d, const std::vector<int>& days, bool complete) {
    ReferenceTable t;
    t.n_stations = d.n_stations;
    std::map<ReferenceKey, std::vector<std::pair<int, double>>> cells;  // day, total trips
    for (int day : days) {
        double total = 0;
        for (int slot = 0; slot < kSlotsPerDay; ++slot)
            for (StationId s = 0; s < d.n_stations; ++s) total += d.withdrawals[d.index(s, day, slot)];
        cells[ForecastModel::key_of(d.days[day])].push_back({day, total});
    }
    for (auto& [key, members] : cells) {
        std::vector<double> totals;
        for (auto& m : members) totals.push_back(m.second);
        std::sort(totals.begin(), totals.end());
        double median = quantile_sorted(totals, 0.5);
        int best = members.front().first;
        double best_dist = std::numeric_limits<double>::infinity();
        for (auto& [day, total] : members) {  // days are in calendar order: ties keep the earliest
            double dist = std::abs(total - median);
            if (dist < best_dist) {
                best_dist = dist;
                best = day;
            }
        }
        ReferenceProfile p;
        p.day = d.days[best].date;
        p.net.resize(std::size_t(kSlotsPerDay) * d.n_stations);
        for (int slot = 0; slot < kSlotsPerDay; ++slot)
            for (StationId s = 0; s < d.n_stations; ++s) p.net[std::size_t(slot) * d.n_stations + s] = d.net(s, best, slot);
        t.cells.emplace(key, std::move(p));
    }
    if (complete && !t.cells.empty()) {
        // Borrow from the nearest month with the same day type and weather,
        // then from the other weather.
        auto observed = t.cells;
        for (int type = 0; type < 3; ++type)
            for (int month = 1; month <= 12; ++month)
                for (bool rainy : {false, true}) {
                    ReferenceKey k{static_cast<DayType>(type), month, rainy};
                    if (observed.count(k)) continue;
                    const ReferenceProfile* pick = nullptr;
                    for (bool weather : {rainy, !rainy}) {
                        for (int delta = weather == rainy ? 1 : 0; delta <= 6 && !pick; ++delta)
                            for (int sign : {-1, 1}) {
                                int m = ((month - 1 + sign * delta) % 12 + 12) % 12 + 1;
                                auto it = observed.find({k.type, m, weather});
                                if (it != observed.end()) {
                                    pick = &it->second;
                                    break;
                                }
                            }
                        if (pick) break;
                    }
                    if (pick) t.cells.emplace(k, *pick);
                }
    }
    return t;
}

}  // namespace detail

struct FitOptions {
    int jobs = 1;
};

/// Predictions for every (slot, station) of the given days, in dataset order.
/// Entries without lag history (52-week shift only) are NaN.
inline std::vector<double> predict_days(const ForecastModel& m, const Dataset& d, const std::vector<int>& days) {
    std::vector<double> out;
    out.reserve(days.size() * kSlotsPerDay * d.n_stations);
    for (int day : days)
        for (int slot = 0; slot < kSlotsPerDay; ++slot)
            for (StationId s = 0; s < d.n_stations; ++s) {
                HalfHourIndex h{std::int64_t(day) * kSlotsPerDay + slot};
                if (!m.has_history_for(h)) {
                    out.push_back(std::numeric_limits<double>::quiet_NaN());
                    continue;
                }
                out.push_back(m.predict(make_features(d.days[day], slot, s), s, h));
            }
    return out;
}

inline std::vector<double> actual_days(const Dataset& d, const std::vector<int>& days) {
    std::vector<double> out;
    out.reserve(days.size() * kSlotsPerDay * d.n_stations);
    for (int day : days)
        for (int slot = 0; slot < kSlotsPerDay; ++slot)
            for (StationId s = 0; s < d.n_stations; ++s) out.push_back(d.net(s, day, slot));
    return out;
}

struct Evaluation {
    double mse = 0.0;
    std::size_t n = 0;
    std::size_t excluded = 0;  // slots without lag history
};

inline Evaluation evaluate(const ForecastModel& m, const Dataset& d, const std::vector<int>& days) {
    auto pred = predict_days(m, d, days);
    auto actual = actual_days(d, days);
    Evaluation e;
    std::vector<double> p, a;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (std::isnan(pred[i])) {
            ++e.excluded;
            continue;
        }
        p.push_back(pred[i]);
        a.push_back(actual[i]);
    }
    e.n = p.size();
    if (e.n == 0) throw Error("insufficient history: no evaluable slots for " + m.spec().name());
    e.mse = mse(p, a);
    return e;
}

namespace detail {

inline TreeSet fit_trees(const ModelSpec& spec, const Hyper& h, const std::vector<TrainingSet>& sets, int jobs) {
    TreeSet ts;
    ts.models.resize(sets.size());
    parallel_for(sets.size(), jobs, [&](std::size_t k) {
        // Each station gets its own seed stream.
        auto p = ensemble_params(spec.family, h, spec.seed + 7919ULL * k);
        ts.models[k] = ml::Ensemble::fit(sets[k].X, sets[k].y, p);
    });
    return ts;
}

}  // namespace detail

/// Trains a model on `train` days; when the grid has several points the one
/// with the lowest MSE on `valid` days is kept (first in grid order on ties).
inline ForecastModel fit(const ModelSpec& spec, const Dataset& d, const std::vector<int>& train,
                         const std::vector<int>& valid, const FitOptions& opt = {}) {
    if (train.empty()) throw ValidationError("fit: empty training set");
    if (spec.approach == Approach::Local && d.n_stations == 0) throw ValidationError("fit: dataset has no stations");
    switch (spec.family) {
        case Family::HistoricalShifted:
            return ForecastModel(spec, Hyper{}, detail::history_of(d));
        case Family::ReferenceDay:
            return ForecastModel(spec, Hyper{}, detail::reference_table(d, train, spec.reference_complete_missing));
        default:
            break;
    }
    std::vector<detail::TrainingSet> sets;
    if (spec.approach == Approach::Global) {
        sets.push_back(detail::training_rows(d, train, std::nullopt));
    } else {
        sets.resize(d.n_stations);
        parallel_for(sets.size(), opt.jobs, [&](std::size_t s) {
            sets[s] = detail::training_rows(d, train, static_cast<StationId>(s));
        });
    }
    const auto points = spec.grid.points(spec.family);
    if (points.empty()) throw ValidationError("empty hyperparameter grid");
    std::optional<ForecastModel> best;
    double best_mse = std::numeric_limits<double>::infinity();
    for (const auto& h : points) {
        ForecastModel m(spec, h, detail::fit_trees(spec, h, sets, opt.jobs));
        if (points.size() == 1 || valid.empty()) return m;
        double v = evaluate(m, d, valid).mse;
        if (v < best_mse) {
            best_mse = v;
            best = std::move(m);
        }
    }
    return *best;
}

// ---------------------------------------------------------------------------
// Feature importance

struct ImportanceReport {
    std::array<long long, kFeatureCount> split_counts{};         // summed over all models
    std::vector<std::array<double, kFeatureCount>> shares;       // one per model (per station when local)
    std::array<BoxStats, kFeatureCount> distribution{};          // across stations (local)
    std::array<double, kFeatureCount> overall_share{};           // normalized summed counts
};

inline ImportanceReport feature_importance(const ForecastModel& m) {
    const auto* ts = std::get_if<TreeSet>(&m.state());
    if (!ts) throw Error("feature importance needs a tree model");
    ImportanceReport r;
    for (const auto& e : ts->models) {
        auto c = e.split_counts();
        long long total = 0;
        for (int f = 0; f < kFeatureCount; ++f) {
            r.split_counts[f] += c[f];
            total += c[f];
        }
        std::array<double, kFeatureCount> share{};
        if (total > 0)
            for (int f = 0; f < kFeatureCount; ++f) share[f] = double(c[f]) / total;
        r.shares.push_back(share);
    }
    long long total = 0;
    for (auto c : r.split_counts) total += c;
    if (total > 0)
        for (int f = 0; f < kFeatureCount; ++f) r.overall_share[f] = double(r.split_counts[f]) / total;
    for (int f = 0; f < kFeatureCount; ++f) {
        std::vector<double> v;
        for (const auto& s : r.shares) v.push_back(s[f]);
        r.distribution[f] = box_stats(std::move(v));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Model files

namespace detail {

inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
    out << v.size();
    for (double x : v) out << ' ' << csv::num(x);
    out << '\n';
}

inline std::string next_token(std::istream& in) {
    std::string t;
    if (!(in >> t)) throw ValidationError("model file truncated");
    return t;
}

inline double read_double(std::istream& in) { return csv::to_double(next_token(in), "model file"); }
inline long long read_int(std::istream& in) { return csv::to_int(next_token(in), "model file"); }

inline void expect(std::istream& in, std::string_view word) {
    auto t = next_token(in);
    if (t != word) throw ValidationError("model file: expected '" + std::string(word) + "', got '" + t + "'");
}

}  // namespace detail

inline constexpr std::string_view kModelMagic = "bss-twin-model";

/// Text serialization; doubles use shortest round-trip form so a reloaded
/// model predicts bit-identically.
inline void save_model(std::ostream& out, const ForecastModel& m) {
    const auto& s = m.spec();
    const auto& h = m.hyper();
    out << kModelMagic << " 1\n";
    out << "family " << family_name(s.family) << "\napproach " << (s.approach == Approach::Global ? "global" : "local")
        << "\nseed " << s.seed << "\n";
    out << "hyper " << h.n_estimators << ' ' << h.max_depth << ' ' << h.min_samples_leaf << ' '
        << csv::num(h.learning_rate) << ' ' << csv::num(h.subsample_fraction) << ' ' << csv::num(h.feature_fraction)
        << ' ' << h.bootstrap << '\n';
    std::visit(
        [&](const auto& st) {
            using T = std::decay_t<decltype(st)>;
            if constexpr (std::is_same_v<T, HistoryTable>) {
                out << "history " << format_date(st.epoch) << ' ' << st.n_stations << ' ' << st.n_days << '\n';
                for (std::size_t i = 0; i < st.net.size(); ++i) out << st.net[i] << (i + 1 == st.net.size() ? '\n' : ' ');
                if (st.net.empty()) out << '\n';
            } else if constexpr (std::is_same_v<T, ReferenceTable>) {
                out << "reference " << st.n_stations << ' ' << st.cells.size() << '\n';
                for (const auto& [k, p] : st.cells) {
                    out << "cell " << static_cast<int>(k.type) << ' ' << k.month << ' ' << k.rainy << ' '
                        << format_date(p.day) << ' ';
                    detail::write_doubles(out, p.net);
                }
            } else {
                out << "trees " << st.models.size() << '\n';
                for (const auto& e : st.models) {
                    out << "ensemble " << static_cast<int>(e.kind()) << ' ' << csv::num(e.base_score()) << ' '
                        << csv::num(e.learning_rate()) << ' ' << e.trees().size() << '\n';
                    for (const auto& t : e.trees()) {
                        out << "tree " << t.nodes().size() << '\n';
                        for (const auto& n : t.nodes()) {
                            out << n.feature << ' ' << csv::num(n.threshold) << ' ' << csv::num(n.value) << ' '
                                << n.n_samples << ' ' << n.left << ' ' << n.right << ' ' << n.left_codes.size();
                            for (auto c : n.left_codes) out << ' ' << int(c);
                            out << '\n';
                        }
                    }
                }
            }
        },
        m.state());
}

inline ForecastModel load_model(std::istream& in) {
    using namespace detail;
    expect(in, kModelMagic);
    if (read_int(in) != 1) throw ValidationError("unsupported model file version");
    ModelSpec spec;
    expect(in, "family");
    spec.family = parse_family(next_token(in));
    expect(in, "approach");
    auto a = next_token(in);
    spec.approach = a == "global" ? Approach::Global : Approach::Local;
    expect(in, "seed");
    spec.seed = static_cast<std::uint64_t>(read_int(in));
    expect(in, "hyper");
    Hyper h;
    h.n_estimators = int(read_int(in));
    h.max_depth = int(read_int(in));
    h.min_samples_leaf = int(read_int(in));
    h.learning_rate = read_double(in);
    h.subsample_fraction = read_double(in);
    h.feature_fraction = read_double(in);
    h.bootstrap = read_int(in) != 0;
    spec.grid = HyperGrid::single(h);
    auto kind = next_token(in);
    if (kind == "history") {
        HistoryTable t;
        t.epoch = parse_date(next_token(in));
        t.n_stations = int(read_int(in));
        t.n_days = int(read_int(in));
        t.net.resize(std::size_t(t.n_stations) * t.n_days * kSlotsPerDay);
        for (auto& v : t.net) v = static_cast<std::int32_t>(read_int(in));
        return ForecastModel(spec, h, std::move(t));
    }
    if (kind == "reference") {
        ReferenceTable t;
        t.n_stations = int(read_int(in));
        auto cells = read_int(in);
        for (long long c = 0; c < cells; ++c) {
            expect(in, "cell");
            ReferenceKey k;
            k.type = static_cast<DayType>(read_int(in));
            k.month = int(read_int(in));
            k.rainy = read_int(in) != 0;
            ReferenceProfile p;
            p.day = parse_date(next_token(in));
            p.net.resize(std::size_t(read_int(in)));
            for (auto& v : p.net) v = read_double(in);
            t.cells.emplace(k, std::move(p));
        }
        return ForecastModel(spec, h, std::move(t));
    }
    if (kind == "trees") {
        TreeSet ts;
        auto n_models = read_int(in);
        for (long long e = 0; e < n_models; ++e) {
            expect(in, "ensemble");
            auto ek = static_cast<ml::EnsembleKind>(read_int(in));
            double base = read_double(in);
            double lr = read_double(in);
            auto n_trees = read_int(in);
            std::vector<ml::RegressionTree> trees(static_cast<std::size_t>(n_trees));
            for (auto& t : trees) {
                expect(in, "tree");
                t.nodes().resize(static_cast<std::size_t>(read_int(in)));
                for (auto& n : t.nodes()) {
                    n.feature = int(read_int(in));
                    n.threshold = read_double(in);
                    n.value = read_double(in);
                    n.n_samples = int(read_int(in));
                    n.left = int(read_int(in));
                    n.right = int(read_int(in));
                    n.left_codes.resize(static_cast<std::size_t>(read_int(in)));
                    for (auto& c : n.left_codes) c = static_cast<std::uint8_t>(read_int(in));
                }
            }
            ts.models.push_back(ml::Ensemble::from_parts(ek, base, lr, std::move(trees)));
        }
        return ForecastModel(spec, h, std::move(ts));
    }
    throw ValidationError("model file: unknown state '" + kind + "'");
}

// ---------------------------------------------------------------------------
// forecast.csv

inline constexpr std::string_view kForecastHeader = "station,hh_index,prediction";

/// Predictions indexed by half-hour, for the simulator. Missing entries are NaN.
class ForecastTable {
public:
    ForecastTable() = default;
    ForecastTable(int n_stations, std::int64_t n_half_hours)
        : n_(n_stations), values_(std::size_t(n_stations) * n_half_hours, std::numeric_limits<double>::quiet_NaN()) {}

    int n_stations() const { return n_; }
    std::int64_t n_half_hours() const { return n_ ? std::int64_t(values_.size() / n_) : 0; }
    double at(StationId s, std::int64_t h) const { return values_[std::size_t(h) * n_ + s]; }
    void set(StationId s, std::int64_t h, double v) { values_[std::size_t(h) * n_ + s] = v; }

    /// One day's [slot][station] block; throws on a coverage gap.
    std::vector<double> day(int day_offset) const {
        std::vector<double> out(std::size_t(kSlotsPerDay) * n_);
        for (int slot = 0; slot < kSlotsPerDay; ++slot)
            for (StationId s = 0; s < n_; ++s) {
                std::int64_t h = std::int64_t(day_offset) * kSlotsPerDay + slot;
                double v = h < n_half_hours() ? at(s, h) : std::numeric_limits<double>::quiet_NaN();
                if (std::isnan(v))
                    throw Error("forecast coverage gap at station " + std::to_string(s) + ", half-hour " + std::to_string(h));
                out[std::size_t(slot) * n_ + s] = v;
            }
        return out;
    }

private:
    int n_ = 0;
    std::vector<double> values_;
};

inline ForecastTable forecast_table(const ForecastModel& m, const Dataset& d, const std::vector<int>& days) {
    ForecastTable t(d.n_stations, std::int64_t(d.n_days()) * kSlotsPerDay);
    auto pred = predict_days(m, d, days);
    std::size_t i = 0;
    for (int day : days)
        for (int slot = 0; slot < kSlotsPerDay; ++slot)
            for (StationId s = 0; s < d.n_stations; ++s) t.set(s, std::int64_t(day) * kSlotsPerDay + slot, pred[i++]);
    return t;
}

inline void write_forecast_csv(std::ostream& out, const ForecastTable& t) {
    out << kForecastHeader << '\n';
    for (std::int64_t h = 0; h < t.n_half_hours(); ++h)
        for (StationId s = 0; s < t.n_stations(); ++s) {
            double v = t.at(s, h);
            if (!std::isnan(v)) out << s << ',' << h << ',' << csv::num(v) << '\n';
        }
}

inline ForecastTable read_forecast_csv(std::istream& in, int n_stations, std::int64_t n_half_hours,
                                       const std::string& name = "forecast.csv") {
    ForecastTable t(n_stations, n_half_hours);
    if (!csv::expect_header(in, kForecastHeader, name)) return t;
    std::string line;
    std::size_t lineno = 1;
    while (csv::getline_clean(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = csv::split(line);
        const auto at = csv::where(name, lineno);
        if (f.size() != 3) throw ValidationError(at + ": expected 3 fields");
        auto s = csv::to_int(f[0], at);
        auto h = csv::to_int(f[1], at);
        if (s < 0 || s >= n_stations || h < 0 || h >= n_half_hours)
            throw ValidationError(at + ": station or half-hour out of range");
        t.set(static_cast<StationId>(s), h, csv::to_double(f[2], at));
    }
    return t;
}

}  // namespace bss
