#include "hytrain/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hytrain {

SimulationReport simulate(const Trajectories& traj, const SpatialGrid& grid,
                          const TrainParams& params, const BatteryParams& batt,
                          const MotorMap& motor_map, const FuelCellMap& fc_map) {
    const int S = traj.num_samples;
    if (static_cast<size_t>(S) != grid.num_samples())
        throw std::invalid_argument("trajectories and grid dimensions do not match");

    SimulationReport rep;
    rep.applied = traj;
    rep.initial_soc_pct = traj.soc.empty() ? batt.soc_init_pct : traj.soc.front();
    rep.v_sim.assign(static_cast<size_t>(S), 0.0);
    rep.soc_sim.assign(static_cast<size_t>(S), 0.0);
    rep.battery_power_w.assign(static_cast<size_t>(S), 0.0);
    rep.fuelcell_power_w.assign(static_cast<size_t>(S), 0.0);
    rep.motor_power_elec_w.assign(static_cast<size_t>(S), 0.0);

    double z = grid.z_stop;
    double soc = rep.initial_soc_pct;
    rep.v_sim[0] = std::sqrt(z);
    rep.soc_sim[0] = soc;
    double fuel = 0;
    double resim_time = 0;
    const double p_fc_min_total = params.fuelcell_stacks * params.fuelcell_power_min_w;

    auto flag = [&](const std::string& kind, int k, double amount) {
        rep.violations.push_back({kind, k, amount});
    };

    for (int k = 0; k + 1 < S; ++k) {
        const auto sk = static_cast<size_t>(k);
        const double ds = grid.ds_m[sk];
        const bool dwell = grid.dwell_interval[sk];
        const double v = std::sqrt(std::max(z, 0.0));
        const double dt = traj.inv_speed[sk] * ds;  // optimizer time base
        resim_time += v > 0 ? ds / v : 0.0;

        // electrical side: motor demand at the simulated speed
        double p_elec = 0;
        const double f_m = traj.motor_force[sk];
        if (std::abs(f_m) > 1e-9) {
            double eta;
            try {
                eta = motor_map.eta_at(std::clamp(f_m, motor_map.min_force(), motor_map.max_force()),
                                       std::clamp(v, motor_map.min_speed(), motor_map.max_speed()));
            } catch (const std::domain_error&) {
                flag("motor_map_range", k, f_m);
                eta = 0.8;
            }
            const double p_mech = f_m * v;
            p_elec = p_mech >= 0 ? p_mech / eta : p_mech * eta;
        }
        rep.motor_power_elec_w[sk] = p_elec;

        // fuel cell follows its command, floored at the stack minimum
        double p_fc_total = params.fuelcell_stacks * traj.fuelcell_force[sk] * v;
        p_fc_total = std::max(p_fc_total, p_fc_min_total);
        const double p_fc_stack_max = params.fuelcell_power_max_w;
        if (p_fc_total > params.fuelcell_stacks * p_fc_stack_max * (1 + 1e-9)) {
            flag("fuelcell_power_bound", k, p_fc_total);
            p_fc_total = params.fuelcell_stacks * p_fc_stack_max;
        }
        rep.fuelcell_power_w[sk] = p_fc_total;
        const double p_fc_stack = p_fc_total / params.fuelcell_stacks;
        double eta_fc;
        try {
            eta_fc = fc_map.eta_at(p_fc_stack);
        } catch (const std::domain_error&) {
            flag("fuelcell_map_range", k, p_fc_stack);
            eta_fc = fc_map.eta_at(std::clamp(p_fc_stack, fc_map.min_power(), fc_map.max_power()));
        }
        fuel += p_fc_total / eta_fc * dt;

        // the battery closes the electrical balance exactly
        double p_batt = p_elec + params.aux_power_w - p_fc_total;
        if (p_batt > params.battery_power_max_w * (1 + 1e-9))
            flag("battery_power_bound", k, p_batt);
        if (p_batt < params.battery_power_min_w * (1 + 1e-9))
            flag("battery_power_bound", k, p_batt);
        rep.battery_power_w[sk] = p_batt;
        double rate;
        try {
            rate = exact_soc_rate(p_batt, batt);
        } catch (const std::domain_error&) {
            flag("battery_discriminant", k, p_batt);
            rate = exact_soc_rate(std::min(p_batt, 0.999 * batt.open_circuit_voltage_v *
                                                       batt.open_circuit_voltage_v /
                                                       (4.0 * batt.internal_resistance_ohm)),
                                  batt);
        }
        soc += rate * dt;
        if (soc > batt.soc_max_pct + 1e-6) flag("soc_upper_bound", k + 1, soc);
        if (soc < batt.soc_min_pct - 1e-6) flag("soc_lower_bound", k + 1, soc);

        // mechanical side: exact kinetic-energy step
        const double f_ext =
            dwell ? 0.0 : external_force(v, grid.gradient_rad[sk], params);
        z = kinetic_step(z, f_m, traj.brake_force[sk], f_ext, ds, params);
        if (z <= 0) {
            flag("stall", k + 1, z);
            rep.stalled = true;
            z = grid.z_stop;
        }

        rep.v_sim[sk + 1] = std::sqrt(z);
        rep.soc_sim[sk + 1] = soc;
    }

    rep.fuel_j = fuel;
    rep.fuel_kg_h2 = fuel / kHydrogenLhvJPerKg;
    const double driving_km = grid.driving_length_m() / 1000.0;
    rep.fuel_j_per_km = driving_km > 0 ? fuel / driving_km : 0.0;
    rep.journey_time_s = traj.journey_time_s;
    rep.journey_time_resim_s = resim_time;
    rep.terminal_soc_pct = soc;
    rep.soc_drift_pp = std::abs(soc - rep.initial_soc_pct);

    double num = 0, den = 0, soc_dev = 0;
    for (int i = 0; i < S; ++i) {
        const auto si = static_cast<size_t>(i);
        const double dv = rep.v_sim[si] - traj.v[si];
        num += dv * dv;
        den += traj.v[si] * traj.v[si];
        if (!traj.soc.empty())
            soc_dev = std::max(soc_dev, std::abs(rep.soc_sim[si] - traj.soc[si]));
    }
    rep.v_rms_dev_frac = den > 0 ? std::sqrt(num / den) : 0.0;
    rep.soc_max_dev_pp = soc_dev;
    return rep;
}

std::string SimulationReport::summary() const {
    std::ostringstream os;
    os << "fuel_j " << fuel_j << "\n";
    os << "fuel_kg_h2 " << fuel_kg_h2 << "\n";
    os << "fuel_j_per_km " << fuel_j_per_km << "\n";
    os << "surrogate_fuel_j " << surrogate_fuel_j << "\n";
    os << "journey_time_s " << journey_time_s << "\n";
    os << "journey_time_resim_s " << journey_time_resim_s << "\n";
    os << "initial_soc_pct " << initial_soc_pct << "\n";
    os << "terminal_soc_pct " << terminal_soc_pct << "\n";
    os << "soc_drift_pp " << soc_drift_pp << "\n";
    os << "v_rms_dev_frac " << v_rms_dev_frac << "\n";
    os << "soc_max_dev_pp " << soc_max_dev_pp << "\n";
    os << "stalled " << (stalled ? 1 : 0) << "\n";
    os << "violations " << violations.size() << "\n";
    for (size_t i = 0; i < violations.size() && i < 20; ++i)
        os << "violation " << violations[i].kind << " sample " << violations[i].sample
           << " amount " << violations[i].amount << "\n";
    return os.str();
}

BehaviorEvents detect_behavior_events(const Trajectories& traj, const TrainParams& params,
                                      double lookahead_s) {
    BehaviorEvents ev;
    const int S = traj.num_samples;
    const double f_thr = 0.02 * params.motor_force_max_n;

    // regen episodes followed by positive traction within the window
    int k = 0;
    const int K = S - 1;
    while (k < K) {
        const auto sk = static_cast<size_t>(k);
        if (traj.motor_force[sk] < -f_thr && !traj.dwell_interval[sk]) {
            int end = k;
            while (end + 1 < K && traj.motor_force[static_cast<size_t>(end + 1)] < -f_thr) ++end;
            const double t_end = traj.time_s[static_cast<size_t>(end + 1)];
            bool dwell_between = false;
            for (int j = end + 1; j < K; ++j) {
                const auto sj = static_cast<size_t>(j);
                if (traj.time_s[sj] > t_end + lookahead_s) break;
                if (traj.dwell_interval[sj]) {
                    dwell_between = true;
                    break;
                }
                if (traj.motor_force[sj] > f_thr) {
                    ev.regen_then_traction += 1;
                    break;
                }
            }
            (void)dwell_between;
            k = end + 1;
        } else {
            ++k;
        }
    }

    // braking transitions: from free running to the regenerative bound
    ev.min_transition_samples = std::numeric_limits<double>::infinity();
    k = 0;
    while (k < K) {
        const auto sk = static_cast<size_t>(k);
        if (traj.motor_force[sk] < -f_thr && !traj.dwell_interval[sk] &&
            (k == 0 || traj.motor_force[static_cast<size_t>(k - 1)] >= -f_thr)) {
            // episode start; find how long until the force bound is reached
            int j = k;
            int reach = -1;
            while (j < K && traj.motor_force[static_cast<size_t>(j)] < -f_thr) {
                const auto sj = static_cast<size_t>(j);
                const double bound = std::max(params.motor_force_min_n,
                                              params.motor_power_min_w * traj.inv_speed[sj]);
                if (traj.motor_force[sj] <= 0.95 * bound) {
                    reach = j;
                    break;
                }
                ++j;
            }
            if (reach >= 0) {
                ev.bound_reaching_brakes += 1;
                const int transition = reach - k + 1;
                ev.min_transition_samples = std::min(ev.min_transition_samples,
                                                     static_cast<double>(transition));
                if (transition < 3) ev.abrupt_brake_onsets += 1;
            }
            while (k < K && traj.motor_force[static_cast<size_t>(k)] < -f_thr) ++k;
        } else {
            ++k;
        }
    }
    return ev;
}

ComparisonReport compare(const SimulationReport& a, const SimulationReport& b,
                         const TrainParams& params) {
    if (a.applied.num_samples != b.applied.num_samples ||
        a.applied.position_m != b.applied.position_m)
        throw std::invalid_argument("cannot compare simulations of different routes");
    ComparisonReport rep;
    rep.fuel_a_j = a.fuel_j;
    rep.fuel_b_j = b.fuel_j;
    rep.delta_j = b.fuel_j - a.fuel_j;
    rep.delta_percent = b.fuel_j != 0 ? 100.0 * rep.delta_j / b.fuel_j : 0.0;
    rep.surrogate_delta_percent =
        b.surrogate_fuel_j != 0
            ? 100.0 * (b.surrogate_fuel_j - a.surrogate_fuel_j) / b.surrogate_fuel_j
            : 0.0;
    rep.soc_drift_a_pp = a.soc_drift_pp;
    rep.soc_drift_b_pp = b.soc_drift_pp;
    rep.events_a = detect_behavior_events(a.applied, params);
    rep.events_b = detect_behavior_events(b.applied, params);
    return rep;
}

std::string ComparisonReport::summary() const {
    std::ostringstream os;
    os << "fuel_a_j " << fuel_a_j << "\n";
    os << "fuel_b_j " << fuel_b_j << "\n";
    os << "delta_j " << delta_j << "\n";
    os << "delta_percent " << delta_percent << "\n";
    os << "surrogate_delta_percent " << surrogate_delta_percent << "\n";
    os << "soc_drift_a_pp " << soc_drift_a_pp << "\n";
    os << "soc_drift_b_pp " << soc_drift_b_pp << "\n";
    os << "regen_then_traction_a " << events_a.regen_then_traction << "\n";
    os << "regen_then_traction_b " << events_b.regen_then_traction << "\n";
    os << "abrupt_brake_onsets_a " << events_a.abrupt_brake_onsets << "\n";
    os << "abrupt_brake_onsets_b " << events_b.abrupt_brake_onsets << "\n";
    os << "min_transition_samples_a " << events_a.min_transition_samples << "\n";
    os << "min_transition_samples_b " << events_b.min_transition_samples << "\n";
    return os.str();
}

}  // namespace hytrain
