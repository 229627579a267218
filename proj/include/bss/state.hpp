#pragma once

// Simulation state shared by the event engine and relocation policies.

#include <optional>
#include <string>
#include <vector>

#include "bss/core.hpp"

namespace bss {

struct KpiCounters {
    long long missed_withdrawals = 0;
    long long missed_returns = 0;
    double total_km = 0.0;
    long long relocated_bikes = 0;

    long long total_missed() const { return missed_withdrawals + missed_returns; }

    KpiCounters& operator+=(const KpiCounters& o) {
        missed_withdrawals += o.missed_withdrawals;
        missed_returns += o.missed_returns;
        total_km += o.total_km;
        relocated_bikes += o.relocated_bikes;
        return *this;
    }
    friend bool operator==(const KpiCounters&, const KpiCounters&) = default;
};

enum class TaskAction : int { Pickup = 0, Drop = 1 };

struct VehicleTask {
    int vehicle = 0;
    StationId destination = 0;
    TaskAction action = TaskAction::Pickup;
    int quantity = 1;
    int departure_time = 0;

    friend bool operator==(const VehicleTask&, const VehicleTask&) = default;
};

enum class VehicleStatus : int { OffShift = 0, Idle, Travelling, Servicing, Returning, Done };

struct VehicleState {
    int location = 0;  // node index; the depot is Layout::depot()
    int load = 0;
    VehicleStatus status = VehicleStatus::OffShift;
    std::optional<VehicleTask> task;
    bool shift_over = false;
    StationId excluded_station = -1;  // skipped by the planner until `excluded_until`
    int excluded_until = -1;
};

struct SimState {
    int clock = 0;
    std::vector<int> stock;
    std::vector<VehicleState> vehicles;
    long long bikes_in_transit = 0;  // user trips, redirects, and held bikes
    long long held_bikes = 0;        // waiting for a free dock anywhere
    int depot_stock = 0;
    KpiCounters counters;

    long long total_bikes() const {
        long long t = bikes_in_transit + depot_stock;
        for (int s : stock) t += s;
        for (const auto& v : vehicles) t += v.load;
        return t;
    }
};

}  // namespace bss
