#include "hytrain/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hytrain {

Trajectories extract(const VariableMap& map, const SolverResult& result, const SpatialGrid& grid,
                     const TrainParams& params) {
    if (result.status != SolveStatus::kOptimal)
        throw std::runtime_error(std::string("cannot extract trajectories from a ") +
                                 status_name(result.status) + " solve");
    const int S = static_cast<int>(grid.num_samples());
    if (map.num_samples != S) throw std::invalid_argument("variable map does not match the grid");

    Trajectories t;
    t.num_samples = S;
    auto fill = [&](std::vector<double>& dst, Field f) {
        dst.resize(static_cast<size_t>(S));
        for (int i = 0; i < S; ++i) dst[static_cast<size_t>(i)] = map.value(f, i, result.primal);
    };
    fill(t.v, Field::kSpeed);
    fill(t.z, Field::kKinetic);
    fill(t.soc, Field::kSoc);
    fill(t.soc_drop, Field::kSocDrop);
    fill(t.inv_speed, Field::kInvSpeed);
    fill(t.omega, Field::kOmega);
    fill(t.motor_force, Field::kMotorForce);
    fill(t.brake_force, Field::kBrakeForce);
    fill(t.fuelcell_force, Field::kFuelCellForce);
    fill(t.battery_force, Field::kBatteryForce);

    t.ds_m = grid.ds_m;
    t.dwell_interval = grid.dwell_interval;
    t.dwell_sample = grid.dwell_sample;
    t.position_m = grid.position_m;
    t.z_stop = grid.z_stop;

    t.time_s.resize(static_cast<size_t>(S), 0.0);
    for (int i = 1; i < S; ++i)
        t.time_s[static_cast<size_t>(i)] = t.time_s[static_cast<size_t>(i - 1)] +
                                           t.inv_speed[static_cast<size_t>(i - 1)] *
                                               grid.ds_m[static_cast<size_t>(i - 1)];
    t.journey_time_s = t.time_s.back();

    t.motor_power_w.assign(static_cast<size_t>(S), 0.0);
    t.fuelcell_power_w.assign(static_cast<size_t>(S), 0.0);
    t.battery_power_w.assign(static_cast<size_t>(S), 0.0);
    for (int k = 0; k + 1 < S; ++k) {
        const auto sk = static_cast<size_t>(k);
        t.motor_power_w[sk] = t.motor_force[sk] * t.v[sk];
        t.fuelcell_power_w[sk] = params.fuelcell_stacks * t.fuelcell_force[sk] * t.v[sk];
        t.battery_power_w[sk] = t.battery_force[sk] * t.v[sk];
    }
    return t;
}

namespace {

void track(TightnessEntry& e, double slack, int i, double threshold) {
    if (slack > e.max_slack) {
        e.max_slack = slack;
        e.worst_sample = i;
    }
    if (slack > threshold) e.ok = false;
}

}  // namespace

TightnessReport check_tightness(const Trajectories& traj, const SurrogateFits& fits,
                                const TrainParams& params, double threshold) {
    TightnessReport rep;
    rep.threshold = threshold;
    const int S = traj.num_samples;
    const double v_stop = std::sqrt(traj.z_stop);

    for (int i = 0; i < S; ++i) {
        const auto si = static_cast<size_t>(i);
        const double zi = traj.z[si];
        const double vi = traj.v[si];
        const double s_sq = std::abs(vi * vi - zi) / std::max(zi, traj.z_stop);
        track(rep.speed_square, s_sq, i, threshold);

        const double v_eff = traj.dwell_sample[si] ? v_stop : vi;
        const double s_inv = std::abs(v_eff * traj.inv_speed[si] - 1.0);
        track(rep.speed_inverse, s_inv, i, threshold);

        if (s_sq > threshold || s_inv > threshold) rep.offending.push_back(i);
    }

    const double force_floor = 0.01 * params.motor_force_max_n;
    for (int k = 0; k + 1 < S; ++k) {
        const auto sk = static_cast<size_t>(k);
        // electric traction balance over interval k
        const double demand = fits.motor.eval(traj.motor_force[sk], traj.z[sk]) +
                              params.aux_power_w * traj.inv_speed[sk];
        const double supply = params.fuelcell_stacks * traj.fuelcell_force[sk] +
                              traj.battery_force[sk];
        const double s_tr = std::abs(supply - demand) /
                            std::max({std::abs(supply), std::abs(demand), force_floor});
        track(rep.traction_balance, s_tr, k, threshold);
        if (s_tr > threshold) rep.offending.push_back(k);

        // battery rate cone over interval k (omega lives at the right sample)
        if (traj.dwell_interval[sk]) continue;
        const double lhs = fits.soc.alpha * traj.ds_m[sk] * traj.battery_force[sk] *
                           traj.battery_force[sk];
        const double rhs = traj.omega[sk + 1] * traj.inv_speed[sk];
        const double f_ref = 0.05 * params.battery_power_max_w * traj.inv_speed[sk];
        const double floor = fits.soc.alpha * traj.ds_m[sk] * f_ref * f_ref;
        const double s_rate = std::abs(rhs - lhs) / std::max({lhs, rhs, floor});
        track(rep.soc_rate, s_rate, k, threshold);
        if (s_rate > threshold) rep.offending.push_back(k);
    }

    std::sort(rep.offending.begin(), rep.offending.end());
    rep.offending.erase(std::unique(rep.offending.begin(), rep.offending.end()),
                        rep.offending.end());
    return rep;
}

std::string TightnessReport::summary() const {
    std::ostringstream os;
    auto line = [&](const char* name, const TightnessEntry& e) {
        os << name << ": max_slack " << e.max_slack << " at sample " << e.worst_sample << " -> "
           << (e.ok ? "tight" : "SLACK") << "\n";
    };
    os << "tightness threshold " << threshold << "\n";
    line("traction_balance", traction_balance);
    line("speed_square", speed_square);
    line("speed_inverse", speed_inverse);
    line("soc_rate", soc_rate);
    os << "verdict: " << (all_ok() ? "all relaxed constraints tight" : "slack detected") << "\n";
    return os.str();
}

double surrogate_fuel_j(const Trajectories& traj, const SurrogateFits& fits,
                        const TrainParams& params) {
    double fuel = 0;
    for (int k = 0; k + 1 < traj.num_samples; ++k) {
        const auto sk = static_cast<size_t>(k);
        fuel += params.fuelcell_stacks *
                fits.fuelcell.eval(traj.fuelcell_force[sk], traj.z[sk]) * traj.ds_m[sk];
    }
    return fuel;
}

Trajectories merge_sequential(const Trajectories& speed_step, const Trajectories& ems_step) {
    if (speed_step.num_samples != ems_step.num_samples)
        throw std::invalid_argument("sequential steps have mismatched sample counts");
    Trajectories t = speed_step;
    t.soc = ems_step.soc;
    t.soc_drop = ems_step.soc_drop;
    t.omega = ems_step.omega;
    t.fuelcell_force = ems_step.fuelcell_force;
    t.battery_force = ems_step.battery_force;
    for (int k = 0; k + 1 < t.num_samples; ++k) {
        const auto sk = static_cast<size_t>(k);
        t.fuelcell_power_w[sk] = ems_step.fuelcell_power_w[sk];
        t.battery_power_w[sk] = ems_step.battery_power_w[sk];
    }
    return t;
}

}  // namespace hytrain
