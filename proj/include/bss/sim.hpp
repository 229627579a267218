#pragma once

// Discrete-event simulation of one day of user trips and vehicle relocation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "bss/core.hpp"
#include "bss/csv.hpp"
#include "bss/relocation.hpp"
#include "bss/scenario.hpp"
#include "bss/state.hpp"
#include "bss/stats.hpp"

namespace bss {

/// Tie order among simultaneous events follows the enumerator order.
enum class EventKind : int {
    ReturnArrival = 0,
    WithdrawalRequest,
    VehicleArrival,
    VehicleServiceDone,
    ShiftStart,
    ShiftEnd,
    SlotBoundary,
};

struct Event {
    std::int64_t time = 0;
    EventKind kind = EventKind::SlotBoundary;
    int id = 0;              // station for user events, vehicle for vehicle events, slot for boundaries
    std::uint64_t seq = 0;   // insertion order, last tie-breaker
    int payload = 0;         // scenario event index for withdrawals

    bool operator>(const Event& o) const {
        if (time != o.time) return time > o.time;
        if (kind != o.kind) return kind > o.kind;
        if (id != o.id) return id > o.id;
        return seq > o.seq;
    }
};

struct DayKpi {
    DayContext date_ctx;
    KpiCounters counters;
    std::vector<KpiCounters> per_slot = std::vector<KpiCounters>(kSlotsPerDay);
};

struct SimOptions {
    bool check_invariants = false;  // verify conservation and bounds after every event
    int max_extra_slots = 48;       // boundaries kept firing after midnight while bikes are held
};

/// Event-by-event simulator; `simulate_day` is the one-call wrapper.
class DaySimulator {
public:
    DaySimulator(const Layout& layout, const Fleet& fleet, const Scenario& scenario,
                 std::unique_ptr<RelocationPolicy> policy, std::span<const double> forecasts,
                 const PolicyParams& params, SimOptions opt = {})
        : layout_(layout), fleet_(fleet), scenario_(scenario), policy_(std::move(policy)), params_(params), opt_(opt) {
        auto violations = validate_layout(layout);
        if (!violations.empty()) throw ValidationError("invalid layout: " + violations.front());
        const int n = layout.size();
        if (forecasts.size() != std::size_t(n) * kSlotsPerDay)
            throw Error("forecast coverage gap: need 48 slots for each of " + std::to_string(n) + " stations");
        for (double f : forecasts)
            if (std::isnan(f)) throw Error("forecast coverage gap: missing value");
        for (const auto& e : scenario.events)
            if (e.origin < 0 || e.origin >= n || e.destination < 0 || e.destination >= n)
                throw ValidationError("scenario references a station outside the layout");
        for (const auto& v : fleet.vehicles) {
            validate_shift(v.shift);
            if (v.capacity < 1) throw ValidationError("vehicle capacity below 1");
        }

        kpi_.date_ctx = scenario.date_ctx;
        state_.stock.resize(n);
        for (int s = 0; s < n; ++s) state_.stock[s] = layout.stations[s].initial_stock;
        state_.vehicles.resize(fleet.vehicles.size());
        for (std::size_t k = 0; k < fleet.vehicles.size(); ++k) {
            const auto& v = fleet.vehicles[k];
            state_.vehicles[k].location = v.start_station ? *v.start_station : layout.depot();
            push({v.shift.start, EventKind::ShiftStart, int(k)});
            push({v.shift.end, EventKind::ShiftEnd, int(k)});
        }
        initial_bikes_ = state_.total_bikes();
        for (std::size_t i = 0; i < scenario.events.size(); ++i) {
            const auto& e = scenario.events[i];
            push({e.request_time, EventKind::WithdrawalRequest, e.origin, 0, int(i)});
        }
        push({kSlotSeconds, EventKind::SlotBoundary, 1});
        policy_->begin_day(layout, forecasts);
        policy_->on_slot_boundary(state_, layout_, 0);
    }

    const SimState& state() const { return state_; }
    const DayKpi& kpi() const { return kpi_; }
    long long initial_bikes() const { return initial_bikes_; }
    long long invariant_violations() const { return violations_; }
    std::optional<Event> last_event() const { return last_; }

    /// Processes one event; false once the queue is drained.
    bool step() {
        if (queue_.empty()) return false;
        Event ev = queue_.top();
        queue_.pop();
        state_.clock = static_cast<int>(ev.time);
        last_ = ev;
        switch (ev.kind) {
            case EventKind::ReturnArrival: process_return(ev.id); break;
            case EventKind::WithdrawalRequest: process_withdrawal(ev.payload); break;
            case EventKind::VehicleArrival: vehicle_arrival(ev.id); break;
            case EventKind::VehicleServiceDone: service_done(ev.id); break;
            case EventKind::ShiftStart: shift_start(ev.id); break;
            case EventKind::ShiftEnd: shift_end(ev.id); break;
            case EventKind::SlotBoundary: slot_boundary(ev.id); break;
        }
        if (opt_.check_invariants && !check().empty()) ++violations_;
        return true;
    }

    DayKpi run() {
        while (step()) {
        }
        return kpi_;
    }

    /// Describes the first broken invariant, or returns empty.
    std::string check() const {
        if (state_.total_bikes() != initial_bikes_)
            return "bike conservation broken at t=" + std::to_string(state_.clock);
        for (int s = 0; s < layout_.size(); ++s)
            if (state_.stock[s] < 0 || state_.stock[s] > layout_.stations[s].capacity)
                return "stock out of bounds at station " + std::to_string(s);
        for (std::size_t k = 0; k < state_.vehicles.size(); ++k)
            if (state_.vehicles[k].load < 0 || state_.vehicles[k].load > fleet_.vehicles[k].capacity)
                return "load out of bounds on vehicle " + std::to_string(k);
        return {};
    }

private:
    void push(Event e) {
        e.seq = seq_++;
        queue_.push(e);
    }

    int slot_now() const { return std::min(kSlotsPerDay - 1, state_.clock / kSlotSeconds); }

    template <class Fn>
    void count(Fn&& fn) {
        fn(state_.counters);
        fn(kpi_.counters);
        fn(kpi_.per_slot[slot_now()]);
    }

    void process_withdrawal(int event_index) {
        const auto& e = scenario_.events[event_index];
        if (state_.stock[e.origin] > 0) {
            --state_.stock[e.origin];
            ++state_.bikes_in_transit;
            push({std::int64_t(e.request_time) + e.duration, EventKind::ReturnArrival, e.destination});
        } else {
            count([](KpiCounters& c) { ++c.missed_withdrawals; });
        }
    }

    void process_return(StationId s) {
        if (state_.stock[s] < layout_.stations[s].capacity) {
            ++state_.stock[s];
            --state_.bikes_in_transit;
            return;
        }
        count([](KpiCounters& c) { ++c.missed_returns; });
        // Redirect to the nearest station with a free dock right now.
        std::optional<StationId> best;
        for (StationId k = 0; k < layout_.size(); ++k) {
            if (k == s || state_.stock[k] >= layout_.stations[k].capacity) continue;
            if (!best || layout_.graph.time(s, k) < layout_.graph.time(s, *best)) best = k;
        }
        if (best) {
            push({state_.clock + std::int64_t(std::ceil(layout_.graph.time(s, *best))), EventKind::ReturnArrival, *best});
        } else {
            held_.push_back(s);
            ++state_.held_bikes;
        }
    }

    void depart(int v, int to) {
        auto& vs = state_.vehicles[v];
        const double km = layout_.graph.distance(vs.location, to) / 1000.0;
        count([km](KpiCounters& c) { c.total_km += km; });
        push({state_.clock + std::int64_t(std::ceil(layout_.graph.time(vs.location, to))), EventKind::VehicleArrival, v});
    }

    void replan(int v) {
        auto& vs = state_.vehicles[v];
        if (vs.status != VehicleStatus::Idle || vs.shift_over) return;
        auto task = policy_->plan(state_, layout_, fleet_, v);
        if (!task) return;
        task->departure_time = state_.clock;
        vs.task = task;
        vs.status = VehicleStatus::Travelling;
        depart(v, task->destination);
    }

    void return_to_depot(int v) {
        auto& vs = state_.vehicles[v];
        vs.task.reset();
        if (vs.location == layout_.depot()) {
            state_.depot_stock += vs.load;
            vs.load = 0;
            vs.status = VehicleStatus::Done;
            return;
        }
        vs.status = VehicleStatus::Returning;
        depart(v, layout_.depot());
    }

    void shift_start(int v) {
        auto& vs = state_.vehicles[v];
        vs.status = VehicleStatus::Idle;
        replan(v);
    }

    void shift_end(int v) {
        auto& vs = state_.vehicles[v];
        vs.shift_over = true;
        // A vehicle on its way to or serving a station finishes that task first.
        if (vs.status == VehicleStatus::Idle) return_to_depot(v);
    }

    void vehicle_arrival(int v) {
        auto& vs = state_.vehicles[v];
        if (vs.status == VehicleStatus::Returning) {
            vs.location = layout_.depot();
            state_.depot_stock += vs.load;
            vs.load = 0;
            vs.status = VehicleStatus::Done;
            return;
        }
        const auto& task = *vs.task;
        vs.location = task.destination;
        const int moved = execute_task(v, task);
        vs.status = VehicleStatus::Servicing;
        if (moved == 0) {
            vs.excluded_station = task.destination;
            vs.excluded_until = state_.clock + kSlotSeconds;
        }
        push({state_.clock + std::int64_t(params_.per_bike_service_s) * moved, EventKind::VehicleServiceDone, v});
    }

    /// Applies the task clipped to what is feasible now; returns bikes moved.
    int execute_task(int v, const VehicleTask& task) {
        auto& vs = state_.vehicles[v];
        const StationId s = task.destination;
        int q;
        if (task.action == TaskAction::Pickup) {
            q = std::min({task.quantity, state_.stock[s], fleet_.vehicles[v].capacity - vs.load});
            state_.stock[s] -= q;
            vs.load += q;
        } else {
            q = std::min({task.quantity, vs.load, layout_.stations[s].capacity - state_.stock[s]});
            state_.stock[s] += q;
            vs.load -= q;
        }
        q = std::max(q, 0);
        count([q](KpiCounters& c) { c.relocated_bikes += q; });
        return q;
    }

    void service_done(int v) {
        auto& vs = state_.vehicles[v];
        vs.task.reset();
        vs.status = VehicleStatus::Idle;
        if (vs.shift_over) {
            return_to_depot(v);
            return;
        }
        replan(v);
    }

    void slot_boundary(int slot) {
        if (slot < kSlotsPerDay) policy_->on_slot_boundary(state_, layout_, slot);
        if (!held_.empty()) {
            for (StationId s : held_) push({state_.clock, EventKind::ReturnArrival, s});
            state_.held_bikes -= static_cast<long long>(held_.size());
            held_.clear();
        }
        for (std::size_t v = 0; v < state_.vehicles.size(); ++v) replan(int(v));
        // Past midnight, boundaries keep firing only while bikes are still on the road.
        const int next = slot + 1;
        const bool pending = state_.bikes_in_transit > 0;
        if (next < kSlotsPerDay || (pending && next < kSlotsPerDay + opt_.max_extra_slots))
            push({std::int64_t(next) * kSlotSeconds, EventKind::SlotBoundary, next});
    }

    const Layout& layout_;
    const Fleet& fleet_;
    const Scenario& scenario_;
    std::unique_ptr<RelocationPolicy> policy_;
    PolicyParams params_;
    SimOptions opt_;
    SimState state_;
    DayKpi kpi_;
    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
    std::vector<StationId> held_;
    std::uint64_t seq_ = 0;
    long long initial_bikes_ = 0;
    long long violations_ = 0;
    std::optional<Event> last_;
};

/// Runs one day to completion. The engine itself is deterministic; `seed` is
/// carried for run bookkeeping so sweeps can derive per-run streams.
inline DayKpi simulate_day(const Layout& layout, const Fleet& fleet, const Scenario& scenario, const PolicyConfig& policy,
                           std::span<const double> forecasts, std::uint64_t seed = 0, SimOptions opt = {}) {
    (void)seed;
    DaySimulator sim(layout, fleet, scenario, policy.make(), forecasts, policy.params, opt);
    return sim.run();
}

// ---------------------------------------------------------------------------
// Aggregation and kpi.csv

enum class Grouping : int { None = 0, Month, DayOfWeek };

struct KpiGroupStats {
    std::string group;
    std::size_t days = 0;
    BoxStats missed_withdrawals, missed_returns, total_missed, total_km, relocated_bikes;
};

/// Per-group means and distributions. `relocation_days_only` drops Sundays and holidays.
inline std::vector<KpiGroupStats> aggregate_kpis(const std::vector<DayKpi>& days, Grouping g,
                                                 bool relocation_days_only = false) {
    if (days.empty()) throw Error("aggregate_kpis: no days");
    static constexpr const char* dow[] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
    std::map<int, std::vector<const DayKpi*>> groups;
    for (const auto& d : days) {
        if (relocation_days_only && day_type(d.date_ctx) == DayType::Sunday) continue;
        int key = g == Grouping::Month ? d.date_ctx.month : g == Grouping::DayOfWeek ? static_cast<int>(d.date_ctx.day_of_week) : 0;
        groups[key].push_back(&d);
    }
    std::vector<KpiGroupStats> out;
    for (const auto& [key, members] : groups) {
        KpiGroupStats s;
        s.group = g == Grouping::Month ? std::to_string(key) : g == Grouping::DayOfWeek ? dow[key] : "all";
        s.days = members.size();
        std::vector<double> mw, mr, tm, km, rb;
        for (const auto* d : members) {
            mw.push_back(double(d->counters.missed_withdrawals));
            mr.push_back(double(d->counters.missed_returns));
            tm.push_back(double(d->counters.total_missed()));
            km.push_back(d->counters.total_km);
            rb.push_back(double(d->counters.relocated_bikes));
        }
        s.missed_withdrawals = box_stats(mw);
        s.missed_returns = box_stats(mr);
        s.total_missed = box_stats(tm);
        s.total_km = box_stats(km);
        s.relocated_bikes = box_stats(rb);
        out.push_back(std::move(s));
    }
    return out;
}

/// Percentage change of a mean KPI relative to a reference policy's mean.
inline double gap_from_reference(double value, double reference) {
    if (!(reference > 0)) throw Error("gap_from_reference: reference must be positive");
    return 100.0 * (value - reference) / reference;
}

/// Percentage of the reducible part (reference minus floor) removed by a policy.
inline double improvement_net_of_floor(double value, double reference, double floor) {
    if (!(reference - floor > 0)) throw Error("improvement_net_of_floor: reference must exceed the floor");
    return 100.0 * ((reference - floor) - (value - floor)) / (reference - floor);
}

inline constexpr std::string_view kKpiHeader = "date,missed_withdrawals,missed_returns,total_missed,total_km,relocated_bikes";

inline void write_kpi_csv(std::ostream& out, const std::vector<DayKpi>& days, bool per_slot = false) {
    out << kKpiHeader;
    if (per_slot)
        for (int k = 0; k < kSlotsPerDay; ++k) out << ",missed_s" << k;
    out << '\n';
    for (const auto& d : days) {
        const auto& c = d.counters;
        out << format_date(d.date_ctx.date) << ',' << c.missed_withdrawals << ',' << c.missed_returns << ','
            << c.total_missed() << ',' << csv::fixed(c.total_km, 3) << ',' << c.relocated_bikes;
        if (per_slot)
            for (const auto& s : d.per_slot) out << ',' << s.total_missed();
        out << '\n';
    }
}

}  // namespace bss
