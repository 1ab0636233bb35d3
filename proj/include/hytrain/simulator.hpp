#pragma once

#include <string>
#include <vector>

#include "hytrain/powertrain.hpp"
#include "hytrain/route.hpp"
#include "hytrain/trajectory.hpp"

namespace hytrain {

// Lower heating value of hydrogen, used to express fuel energy as mass.
inline constexpr double kHydrogenLhvJPerKg = 120.0e6;

struct SimViolation {
    std::string kind;
    int sample = -1;
    double amount = 0;
};

// Exact-model replay of optimized controls: no surrogates, interpolated
// efficiency maps, square-root battery model.
struct SimulationReport {
    double fuel_j = 0;
    double fuel_kg_h2 = 0;
    double fuel_j_per_km = 0;
    double surrogate_fuel_j = 0;   // the optimizer's own fuel prediction
    double journey_time_s = 0;     // optimizer time axis (gamma-based)
    double journey_time_resim_s = 0;  // re-derived as sum ds / v_sim
    double initial_soc_pct = 0;
    double terminal_soc_pct = 0;
    double soc_drift_pp = 0;       // |terminal - initial|
    double v_rms_dev_frac = 0;     // RMS deviation of simulated vs optimized speed
    double soc_max_dev_pp = 0;     // worst per-sample |soc_sim - soc_opt|
    bool stalled = false;

    std::vector<double> v_sim;            // per sample
    std::vector<double> soc_sim;          // per sample
    std::vector<double> battery_power_w;  // per interval (left sample index)
    std::vector<double> fuelcell_power_w; // total across stacks
    std::vector<double> motor_power_elec_w;
    std::vector<SimViolation> violations;

    Trajectories applied;  // the controls that were replayed

    std::string summary() const;
};

SimulationReport simulate(const Trajectories& traj, const SpatialGrid& grid,
                          const TrainParams& params, const BatteryParams& batt,
                          const MotorMap& motor_map, const FuelCellMap& fc_map);

struct BehaviorEvents {
    // regenerative braking episodes followed by positive traction within the
    // look-ahead window, with no station dwell in between
    int regen_then_traction = 0;
    // braking episodes that reach the force/power bound, and how many samples
    // the transition from free running to the bound takes
    int bound_reaching_brakes = 0;
    int abrupt_brake_onsets = 0;       // transition shorter than 3 samples
    double min_transition_samples = 0; // inf when no episode reaches the bound
};

struct ComparisonReport {
    double fuel_a_j = 0, fuel_b_j = 0;
    double delta_j = 0;        // b - a
    double delta_percent = 0;  // (b - a) / b * 100: positive when a uses less fuel
    double surrogate_delta_percent = 0;
    double soc_drift_a_pp = 0, soc_drift_b_pp = 0;
    BehaviorEvents events_a, events_b;
    std::string summary() const;
};

BehaviorEvents detect_behavior_events(const Trajectories& traj, const TrainParams& params,
                                      double lookahead_s = 30.0);

// Compare two replays of the same route (a is typically the concurrent run,
// b the sequential benchmark). Throws when the routes differ.
ComparisonReport compare(const SimulationReport& a, const SimulationReport& b,
                         const TrainParams& params);

}  // namespace hytrain
