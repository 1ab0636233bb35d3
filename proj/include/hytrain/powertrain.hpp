#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace hytrain {

// Physical parameters of the train and its powertrain. Forces in N, powers
// in W, masses in kg. Brake force is mechanical only (always <= 0); negative
// motor force is regenerative braking.
struct TrainParams {
    double mass_kg = 183000.0;
    double rotating_mass_frac = 0.0625;  // lambda
    double davis_a_n = 1743.0;
    double davis_b_kg_per_s = 76.4;
    double davis_c_kg_per_m = 6.2;
    double gravity_mps2 = 9.80665;
    double aux_power_w = 100e3;

    double motor_force_min_n = -87e3;
    double motor_force_max_n = 87e3;
    double motor_power_min_w = -585e3;
    double motor_power_max_w = 585e3;
    double brake_force_min_n = -180e3;  // brake force max is always 0

    int fuelcell_stacks = 4;
    double fuelcell_power_min_w = 6e3;  // per stack, strictly positive
    double fuelcell_power_max_w = 100e3;

    double battery_power_min_w = -600e3;
    double battery_power_max_w = 600e3;

    double equivalent_mass_kg() const { return (1.0 + rotating_mass_frac) * mass_kg; }

    // Throws std::invalid_argument if any invariant is violated.
    void validate() const;
};

// Open-circuit-voltage-plus-resistance battery model. State of charge is
// carried in percent throughout.
struct BatteryParams {
    double open_circuit_voltage_v = 600.0;
    double internal_resistance_ohm = 0.0885;
    double capacity_wh = 220e3;
    double soc_min_pct = 20.0;
    double soc_max_pct = 80.0;
    double soc_init_pct = 50.0;

    double capacity_ah() const { return capacity_wh / open_circuit_voltage_v; }

    // max_abs_power_w: largest |terminal power| the model must cover; the
    // square root in the SOC rate has to stay real over that range.
    void validate(double max_abs_power_w) const;
};

// Sampled motor efficiency over a (force, speed) grid. Force axis is signed:
// negative entries describe regenerative operation.
struct MotorMap {
    std::vector<double> force_grid_n;   // strictly increasing
    std::vector<double> speed_grid_mps; // strictly increasing
    Eigen::MatrixXd eta;                // force x speed, 0 < eta <= 1

    void validate() const;
    // Bilinear interpolation; throws std::domain_error outside the grid.
    double eta_at(double force_n, double speed_mps) const;

    double min_force() const { return force_grid_n.front(); }
    double max_force() const { return force_grid_n.back(); }
    double min_speed() const { return speed_grid_mps.front(); }
    double max_speed() const { return speed_grid_mps.back(); }
};

// Sampled fuel cell efficiency against per-stack electric power output.
struct FuelCellMap {
    std::vector<double> power_grid_w;  // strictly increasing
    std::vector<double> eta;           // 0 < eta <= 1

    void validate() const;
    // Linear interpolation; throws std::domain_error outside the grid.
    double eta_at(double power_w) const;

    double min_power() const { return power_grid_w.front(); }
    double max_power() const { return power_grid_w.back(); }
};

// Convex quadratic surrogate of the electrical traction force
// F_m/eta_m in the variables (z, F_m) with z = v^2:
//   q(F, z) = p00 + p10 z + p01 F + p11 z F + p20 z^2 + p02 F^2
struct MotorQuadratic {
    double p00 = 0, p10 = 0, p01 = 1, p11 = 0, p20 = 0, p02 = 0;

    double eval(double force_n, double z) const {
        return p00 + p10 * z + p01 * force_n + p11 * z * force_n + p20 * z * z +
               p02 * force_n * force_n;
    }
    // Eigenvalues of the (z, F) quadratic-form matrix [[p20, p11/2], [p11/2, p02]].
    Eigen::Vector2d form_eigenvalues() const;
    bool is_convex(double tol = 1e-12) const;
};

// Linear surrogate of per-stack fuel energy per meter: l(F, z) = p0 F + p1 z.
struct FuelCellLinear {
    double p0 = 2.0;
    double p1 = 0.0;
    double eval(double force_n, double z) const { return p0 * force_n + p1 * z; }
};

// Quadratic surrogate of the SOC drop rate (percent/s, positive = discharging):
//   q(P) = alpha P^2 + beta P  ~=  -exact_soc_rate(P)
struct SocQuadratic {
    double alpha = 0;  // pct / (s W^2)
    double beta = 0;   // pct / (s W)
    double eval(double power_w) const { return alpha * power_w * power_w + beta * power_w; }
};

// Residual statistics of a surrogate fit. Relative errors are measured
// against the largest |target| over the fitting grid (full-scale relative).
struct FitStats {
    double max_abs_err = 0;
    double max_rel_err = 0;
    double mean_rel_err = 0;
    double target_scale = 0;  // max |target| used as the denominator
};

struct SurrogateFits {
    MotorQuadratic motor;
    FitStats motor_stats;
    FuelCellLinear fuelcell;
    FitStats fuelcell_stats;
    SocQuadratic soc;
    FitStats soc_stats;
};

// Davis resistance plus gravity: a + b v + c v^2 + m g sin(theta).
double external_force(double speed_mps, double gradient_rad, const TrainParams& params);

// One spatial step of the kinetic-energy recursion in z = v^2:
//   z' = z + (2 ds / m_eq) (F_m + F_brk - F_ext)
double kinetic_step(double z, double motor_force_n, double brake_force_n,
                    double external_force_n, double ds_m, const TrainParams& params);

// d(SOC)/dt in percent/s for a given terminal power (positive = discharging
// the battery, so the returned rate is negative then). Throws
// std::domain_error when the power exceeds what the battery can deliver.
double exact_soc_rate(double battery_power_w, const BatteryParams& batt);

// Per-stack fuel energy per meter traveled: F_fc / eta_fc(F_fc * sqrt(z)).
double exact_fuel_rate(double fuelcell_force_n, double z, const FuelCellMap& map);

// Electrical force demanded by the motor for a mechanical force request at
// speed v: F/eta when motoring, F*eta when regenerating.
double motor_electrical_force(double force_n, double speed_mps, const MotorMap& map);

// Least-squares fit of the electrical traction force over the power-capped
// operating envelope, projected onto the convex cone of PSD quadratic forms.
// grid_points is the number of samples per axis.
MotorQuadratic fit_motor_quadratic(const MotorMap& map, const TrainParams& params,
                                   FitStats* stats = nullptr, int grid_points = 50);

// Least-squares linear fit of per-stack fuel energy per meter over speeds in
// [v_lo, v_hi] and per-stack powers spanning the fuel cell operating range.
FuelCellLinear fit_fuelcell_linear(const FuelCellMap& map, double v_lo, double v_hi,
                                   const TrainParams& params, FitStats* stats = nullptr,
                                   int grid_points = 50);

// Least-squares quadratic fit of the SOC drop rate over [p_min_w, p_max_w].
SocQuadratic fit_soc_quadratic(const BatteryParams& batt, double p_min_w, double p_max_w,
                               FitStats* stats = nullptr, int grid_points = 50);

// Convenience: run all three fits with default ranges derived from params.
SurrogateFits fit_all(const MotorMap& motor_map, const FuelCellMap& fc_map,
                      const TrainParams& params, const BatteryParams& batt);

// Synthetic default maps shipped with the repository (the efficiency data the
// optimizer and simulator run on when no measured maps are provided).
MotorMap default_motor_map(const TrainParams& params, int force_points = 49,
                           int speed_points = 49);
FuelCellMap default_fuelcell_map(const TrainParams& params, int points = 81);

}  // namespace hytrain
