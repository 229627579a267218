#pragma once

// Forecast-driven relocation: per-station target bands over a look-ahead
// window, and a greedy urgency-per-second dispatcher re-run on key events.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "bss/core.hpp"
#include "bss/state.hpp"

namespace bss {

struct PolicyParams {
    int lookahead_slots = 4;
    int deadband_bikes = 2;
    int per_bike_service_s = 30;
};

struct TargetInventory {
    std::vector<int> target;
    std::vector<double> urgency;
    // Extremes of the cumulative forecast over the window; urgency for any
    // stock level follows from these two.
    std::vector<double> min_cumulative;
    std::vector<double> max_cumulative;
    int window = 0;
};

/// Worst projected shortfall or overflow over the window for a given stock.
inline double projected_violation(double stock, int capacity, double min_cum, double max_cum) {
    return std::max(std::max(0.0, -(stock + min_cum)), std::max(0.0, stock + max_cum - capacity));
}

inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

/// `forecasts` is one day's [slot][station] net demand. The window starts at
/// `current_slot` and is cut at the end of the day.
inline TargetInventory compute_targets(std::span<const int> stock, std::span<const int> capacity,
                                       std::span<const double> forecasts, int current_slot, int window) {
    const auto n = stock.size();
    if (forecasts.size() != n * kSlotsPerDay) throw Error("forecast coverage gap: expected 48 slots per station");
    if (window < 1) throw ValidationError("look-ahead window must be at least one slot");
    TargetInventory t;
    t.window = window;
    t.target.resize(n);
    t.urgency.resize(n);
    t.min_cumulative.resize(n);
    t.max_cumulative.resize(n);
    const int last = std::min(kSlotsPerDay, std::max(0, current_slot) + window);
    for (std::size_t s = 0; s < n; ++s) {
        double c = 0, lo_c = std::numeric_limits<double>::infinity(), hi_c = -std::numeric_limits<double>::infinity();
        for (int slot = std::max(0, current_slot); slot < last; ++slot) {
            double f = forecasts[std::size_t(slot) * n + s];
            if (std::isnan(f)) throw Error("forecast coverage gap at station " + std::to_string(s));
            c += f;
            lo_c = std::min(lo_c, c);
            hi_c = std::max(hi_c, c);
        }
        if (last <= current_slot) lo_c = hi_c = 0.0;  // past the end of the day
        const int cap = capacity[s];
        t.min_cumulative[s] = lo_c;
        t.max_cumulative[s] = hi_c;
        const int band_lo = static_cast<int>(std::ceil(std::max(0.0, -lo_c) - 1e-9));
        const int band_hi = static_cast<int>(std::floor(std::min<double>(cap, cap - hi_c) + 1e-9));
        double target;
        if (band_lo <= band_hi) {
            target = round_half_up((band_lo + band_hi) / 2.0);
        } else {
            // Balance projected shortfall against projected overflow.
            target = std::clamp(round_half_up((cap - hi_c - lo_c) / 2.0), 0, cap);
        }
        t.target[s] = static_cast<int>(target);
        t.urgency[s] = projected_violation(stock[s], cap, lo_c, hi_c);
    }
    return t;
}

/// Chooses the next single-station task for an idle vehicle, or nothing.
inline std::optional<VehicleTask> plan_next_task(const SimState& state, const Layout& layout, const Fleet& fleet,
                                                 const TargetInventory& targets, int vehicle, const PolicyParams& p) {
    const auto& v = state.vehicles.at(vehicle);
    const int n = layout.size();
    const int free = fleet.vehicles.at(vehicle).capacity - v.load;
    std::vector<char> reserved(n, 0);
    for (std::size_t k = 0; k < state.vehicles.size(); ++k)
        if (int(k) != vehicle && state.vehicles[k].task) reserved[state.vehicles[k].task->destination] = 1;
    auto blocked = [&](StationId s) {
        return reserved[s] || (v.excluded_station == s && state.clock < v.excluded_until);
    };

    std::optional<VehicleTask> best;
    double best_score = -1, best_time = 0;
    bool any_deficit = false;
    for (StationId s = 0; s < n; ++s) {
        if (blocked(s)) continue;
        const int cap = layout.stations[s].capacity;
        const int diff = state.stock[s] - targets.target[s];
        if (-diff >= p.deadband_bikes) any_deficit = true;
        TaskAction action;
        int q = 0;
        if (free > 0 && diff >= p.deadband_bikes) {
            action = TaskAction::Pickup;
            q = std::min(diff, free);
        } else if (v.load > 0 && -diff >= p.deadband_bikes) {
            action = TaskAction::Drop;
            q = std::min({-diff, v.load, cap - state.stock[s]});
        }
        if (q < 1) continue;
        const double travel = layout.graph.time(v.location, s);
        const double urgency = projected_violation(state.stock[s], cap, targets.min_cumulative[s], targets.max_cumulative[s]);
        const double score = urgency / std::max(1.0, travel + double(p.per_bike_service_s) * q);
        bool better = !best || score > best_score || (score == best_score && travel < best_time);
        if (better) {
            best = VehicleTask{vehicle, s, action, q, state.clock};
            best_score = score;
            best_time = travel;
        }
    }
    if (best || v.load > 0 || free <= 0 || !any_deficit) return best;

    // Empty vehicle with only deficits in sight: fetch from the largest surplus.
    int best_surplus = 0;
    for (StationId s = 0; s < n; ++s) {
        if (blocked(s)) continue;
        const int surplus = state.stock[s] - targets.target[s];
        if (surplus < 1) continue;
        const double travel = layout.graph.time(v.location, s);
        if (surplus > best_surplus || (surplus == best_surplus && travel < best_time)) {
            best_surplus = surplus;
            best_time = travel;
            best = VehicleTask{vehicle, s, TaskAction::Pickup, std::min(surplus, free), state.clock};
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Policy handle used by the simulator

class RelocationPolicy {
public:
    virtual ~RelocationPolicy() = default;
    virtual void begin_day(const Layout& layout, std::span<const double> forecasts) = 0;
    /// Rolls the forecast window at a half-hour boundary.
    virtual void on_slot_boundary(const SimState& state, const Layout& layout, int slot) = 0;
    virtual std::optional<VehicleTask> plan(const SimState& state, const Layout& layout, const Fleet& fleet,
                                            int vehicle) = 0;
};

/// Never issues a task; vehicles only drive their shift.
class NoRelocation final : public RelocationPolicy {
public:
    void begin_day(const Layout&, std::span<const double>) override {}
    void on_slot_boundary(const SimState&, const Layout&, int) override {}
    std::optional<VehicleTask> plan(const SimState&, const Layout&, const Fleet&, int) override { return std::nullopt; }
};

class TargetBandPolicy final : public RelocationPolicy {
public:
    explicit TargetBandPolicy(PolicyParams p) : params_(p) {}

    void begin_day(const Layout& layout, std::span<const double> forecasts) override {
        forecasts_.assign(forecasts.begin(), forecasts.end());
        capacity_.clear();
        for (const auto& s : layout.stations) capacity_.push_back(s.capacity);
    }
    void on_slot_boundary(const SimState& state, const Layout&, int slot) override {
        targets_ = compute_targets(state.stock, capacity_, forecasts_, slot, params_.lookahead_slots);
    }
    std::optional<VehicleTask> plan(const SimState& state, const Layout& layout, const Fleet& fleet,
                                    int vehicle) override {
        return plan_next_task(state, layout, fleet, targets_, vehicle, params_);
    }

    const TargetInventory& targets() const { return targets_; }

private:
    PolicyParams params_;
    std::vector<double> forecasts_;
    std::vector<int> capacity_;
    TargetInventory targets_;
};

enum class PolicyKind : int { None = 0, TargetBand = 1 };

/// Value handle from which each simulation run builds its own policy instance.
struct PolicyConfig {
    PolicyKind kind = PolicyKind::TargetBand;
    PolicyParams params;

    std::unique_ptr<RelocationPolicy> make() const {
        if (kind == PolicyKind::None) return std::make_unique<NoRelocation>();
        return std::make_unique<TargetBandPolicy>(params);
    }
};

}  // namespace bss
