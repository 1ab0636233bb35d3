#pragma once

#include <string>
#include <vector>

#include "hytrain/conic_program.hpp"
#include "hytrain/powertrain.hpp"
#include "hytrain/route.hpp"
#include "hytrain/solver.hpp"

namespace hytrain {

// Physical per-sample trajectories recovered from a solved program, together
// with the grid context needed to interpret them (interval lengths, dwell
// flags). Force/flow fields at sample i describe the interval [i, i+1); the
// last sample's entries are zero.
struct Trajectories {
    int num_samples = 0;
    std::vector<double> v, z, soc, soc_drop, inv_speed, omega;
    std::vector<double> motor_force, brake_force, fuelcell_force, battery_force;

    std::vector<double> time_s;      // t_i = sum_{k<i} gamma_k ds_k
    std::vector<double> position_m;  // route position per sample
    std::vector<double> ds_m;        // interval lengths (size num_samples-1)
    std::vector<bool> dwell_interval;
    std::vector<bool> dwell_sample;
    double z_stop = 0.01;

    // derived electric powers over interval i using the left-endpoint speed;
    // fuel cell power is the total across stacks
    std::vector<double> motor_power_w, fuelcell_power_w, battery_power_w;

    double journey_time_s = 0;
};

struct TightnessEntry {
    double max_slack = 0;
    int worst_sample = -1;
    bool ok = true;
};

// Relative slack of the four relaxed inequalities at a solution. `ok` flags
// compare against the threshold; offending lists samples above it.
struct TightnessReport {
    double threshold = 1e-3;
    TightnessEntry traction_balance;  // electric supply vs demand
    TightnessEntry speed_square;      // v^2 vs z
    TightnessEntry speed_inverse;     // v * gamma vs 1
    TightnessEntry soc_rate;          // battery quadratic rate vs omega * gamma

    bool all_ok() const {
        return traction_balance.ok && speed_square.ok && speed_inverse.ok && soc_rate.ok;
    }
    std::vector<int> offending;
    std::string summary() const;
};

// Unscale the solver primal into physical trajectories. Requires an optimal
// result; throws std::runtime_error otherwise.
Trajectories extract(const VariableMap& map, const SolverResult& result, const SpatialGrid& grid,
                     const TrainParams& params);

// Audit the four relaxed constraints on extracted trajectories. Slacks are
// relative: |v^2-z| / max(z, z_stop); |v gamma - 1|; the traction and rate
// cones against the larger side with a small scale floor. Dwell intervals are
// excluded from the rate cone; dwell samples use v = sqrt(z_stop) for the
// inverse-speed check.
TightnessReport check_tightness(const Trajectories& traj, const SurrogateFits& fits,
                                const TrainParams& params, double threshold = 1e-3);

// Surrogate-model fuel of a trajectory: n_fc * sum l_fc(F_fc, z) ds.
double surrogate_fuel_j(const Trajectories& traj, const SurrogateFits& fits,
                        const TrainParams& params);

// Merge the EMS solution fields (soc, soc_drop, omega, fuel cell and battery
// forces) into a speed-step trajectory, for the sequential pipeline.
Trajectories merge_sequential(const Trajectories& speed_step, const Trajectories& ems_step);

}  // namespace hytrain
