#include "hytrain/powertrain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace hytrain {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

bool strictly_increasing(const std::vector<double>& g) {
    for (size_t i = 1; i < g.size(); ++i)
        if (!(g[i] > g[i - 1])) return false;
    return true;
}

// Index of the grid cell containing x; throws outside [front, back].
size_t cell_index(const std::vector<double>& grid, double x, const char* what) {
    if (x < grid.front() || x > grid.back())
        throw std::domain_error(std::string(what) + " outside map range");
    auto it = std::upper_bound(grid.begin(), grid.end(), x);
    size_t hi = static_cast<size_t>(it - grid.begin());
    if (hi == 0) hi = 1;
    if (hi == grid.size()) hi = grid.size() - 1;
    return hi - 1;
}

}  // namespace

void TrainParams::validate() const {
    require(mass_kg > 0, "mass must be positive");
    require(rotating_mass_frac >= 0, "rotating mass fraction must be nonnegative");
    require(davis_a_n >= 0 && davis_b_kg_per_s >= 0 && davis_c_kg_per_m >= 0,
            "Davis coefficients must be nonnegative");
    require(gravity_mps2 > 0, "gravity must be positive");
    require(aux_power_w >= 0, "auxiliary power must be nonnegative");
    require(motor_force_min_n < motor_force_max_n, "motor force bounds out of order");
    require(motor_power_min_w < motor_power_max_w, "motor power bounds out of order");
    require(brake_force_min_n <= 0, "brake force lower bound must be <= 0");
    require(fuelcell_stacks >= 1, "need at least one fuel cell stack");
    require(fuelcell_power_min_w > 0, "fuel cell lower power bound must be strictly positive");
    require(fuelcell_power_max_w > fuelcell_power_min_w, "fuel cell power bounds out of order");
    require(battery_power_min_w < battery_power_max_w, "battery power bounds out of order");
}

void BatteryParams::validate(double max_abs_power_w) const {
    require(open_circuit_voltage_v > 0, "open-circuit voltage must be positive");
    require(internal_resistance_ohm > 0, "internal resistance must be positive");
    require(capacity_wh > 0, "battery capacity must be positive");
    require(soc_min_pct >= 0 && soc_max_pct <= 100, "SOC bounds must lie within [0, 100]");
    require(soc_min_pct < soc_init_pct && soc_init_pct < soc_max_pct,
            "initial SOC must lie strictly between the SOC bounds");
    const double uoc2 = open_circuit_voltage_v * open_circuit_voltage_v;
    require(4.0 * max_abs_power_w * internal_resistance_ohm < uoc2,
            "battery power range exceeds model capability (discriminant goes negative)");
}

void MotorMap::validate() const {
    require(force_grid_n.size() >= 2 && speed_grid_mps.size() >= 2,
            "motor map needs at least a 2x2 grid");
    require(strictly_increasing(force_grid_n), "motor map force grid must be strictly increasing");
    require(strictly_increasing(speed_grid_mps), "motor map speed grid must be strictly increasing");
    require(eta.rows() == static_cast<Eigen::Index>(force_grid_n.size()) &&
                eta.cols() == static_cast<Eigen::Index>(speed_grid_mps.size()),
            "motor map efficiency table dimensions mismatch");
    require((eta.array() > 0).all() && (eta.array() <= 1).all(),
            "motor map efficiencies must lie in (0, 1]");
    require(speed_grid_mps.front() > 0, "motor map speed grid must be positive");
}

double MotorMap::eta_at(double force_n, double speed_mps) const {
    const size_t i = cell_index(force_grid_n, force_n, "motor force");
    const size_t j = cell_index(speed_grid_mps, speed_mps, "motor speed");
    const double tf = (force_n - force_grid_n[i]) / (force_grid_n[i + 1] - force_grid_n[i]);
    const double ts = (speed_mps - speed_grid_mps[j]) / (speed_grid_mps[j + 1] - speed_grid_mps[j]);
    const double e00 = eta(i, j), e10 = eta(i + 1, j), e01 = eta(i, j + 1), e11 = eta(i + 1, j + 1);
    return (1 - tf) * ((1 - ts) * e00 + ts * e01) + tf * ((1 - ts) * e10 + ts * e11);
}

void FuelCellMap::validate() const {
    require(power_grid_w.size() >= 2, "fuel cell map needs at least two samples");
    require(strictly_increasing(power_grid_w), "fuel cell map power grid must be strictly increasing");
    require(eta.size() == power_grid_w.size(), "fuel cell map table size mismatch");
    for (double e : eta) require(e > 0 && e <= 1, "fuel cell efficiencies must lie in (0, 1]");
}

double FuelCellMap::eta_at(double power_w) const {
    const size_t i = cell_index(power_grid_w, power_w, "fuel cell power");
    const double t = (power_w - power_grid_w[i]) / (power_grid_w[i + 1] - power_grid_w[i]);
    return (1 - t) * eta[i] + t * eta[i + 1];
}

Eigen::Vector2d MotorQuadratic::form_eigenvalues() const {
    Eigen::Matrix2d q;
    q << p20, 0.5 * p11, 0.5 * p11, p02;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(q);
    return es.eigenvalues();
}

bool MotorQuadratic::is_convex(double tol) const {
    return form_eigenvalues().minCoeff() >= -tol;
}

double external_force(double speed_mps, double gradient_rad, const TrainParams& params) {
    return params.davis_a_n + params.davis_b_kg_per_s * speed_mps +
           params.davis_c_kg_per_m * speed_mps * speed_mps +
           params.mass_kg * params.gravity_mps2 * std::sin(gradient_rad);
}

double kinetic_step(double z, double motor_force_n, double brake_force_n,
                    double external_force_n, double ds_m, const TrainParams& params) {
    const double k = 2.0 * ds_m / params.equivalent_mass_kg();
    return z + k * (motor_force_n + brake_force_n) - k * external_force_n;
}

double exact_soc_rate(double battery_power_w, const BatteryParams& batt) {
    const double uoc = batt.open_circuit_voltage_v;
    const double r = batt.internal_resistance_ohm;
    const double disc = uoc * uoc - 4.0 * battery_power_w * r;
    if (disc < 0)
        throw std::domain_error("battery power exceeds battery capability (negative discriminant)");
    const double current_a = (uoc - std::sqrt(disc)) / (2.0 * r);
    return -current_a / (3600.0 * batt.capacity_ah()) * 100.0;
}

double exact_fuel_rate(double fuelcell_force_n, double z, const FuelCellMap& map) {
    const double power_w = fuelcell_force_n * std::sqrt(z);
    return fuelcell_force_n / map.eta_at(power_w);
}

double motor_electrical_force(double force_n, double speed_mps, const MotorMap& map) {
    const double eta = map.eta_at(force_n, speed_mps);
    return force_n >= 0 ? force_n / eta : force_n * eta;
}

namespace {

struct FitSamples {
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> targets;
};

FitStats residual_stats(const std::vector<double>& fitted, const std::vector<double>& targets) {
    FitStats s;
    for (double t : targets) s.target_scale = std::max(s.target_scale, std::abs(t));
    double sum_rel = 0;
    for (size_t i = 0; i < targets.size(); ++i) {
        const double err = std::abs(fitted[i] - targets[i]);
        s.max_abs_err = std::max(s.max_abs_err, err);
        const double rel = err / s.target_scale;
        s.max_rel_err = std::max(s.max_rel_err, rel);
        sum_rel += rel;
    }
    s.mean_rel_err = targets.empty() ? 0 : sum_rel / static_cast<double>(targets.size());
    return s;
}

// Column-equilibrated least squares: each basis column is scaled to unit max
// magnitude before the QR solve, which keeps wildly different term scales
// (constants vs squared forces) from poisoning the recovery.
Eigen::VectorXd least_squares(const FitSamples& samples, int ncoef,
                              const Eigen::VectorXd* weights = nullptr) {
    const int n = static_cast<int>(samples.rows.size());
    Eigen::MatrixXd a(n, ncoef);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) {
        a.row(i) = samples.rows[static_cast<size_t>(i)];
        b(i) = samples.targets[static_cast<size_t>(i)];
        if (weights) {
            a.row(i) *= (*weights)(i);
            b(i) *= (*weights)(i);
        }
    }
    Eigen::VectorXd col_scale(ncoef);
    for (int j = 0; j < ncoef; ++j) {
        col_scale(j) = a.col(j).cwiseAbs().maxCoeff();
        if (col_scale(j) == 0) col_scale(j) = 1;
        a.col(j) /= col_scale(j);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < ncoef) throw std::invalid_argument("fit sample set is rank deficient");
    return qr.solve(b).cwiseQuotient(col_scale);
}

// Plain least squares followed by a few residual-reweighting passes, which
// trims the worst-case error toward a minimax fit. Fixed pass count keeps the
// result deterministic.
Eigen::VectorXd reweighted_least_squares(const FitSamples& samples, int ncoef, int passes = 3) {
    Eigen::VectorXd c = least_squares(samples, ncoef);
    const int n = static_cast<int>(samples.rows.size());
    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    for (int pass = 0; pass < passes; ++pass) {
        double rmax = 0;
        Eigen::VectorXd r(n);
        for (int i = 0; i < n; ++i) {
            r(i) = std::abs(samples.rows[static_cast<size_t>(i)].dot(c) -
                            samples.targets[static_cast<size_t>(i)]);
            rmax = std::max(rmax, r(i));
        }
        if (rmax == 0) break;
        for (int i = 0; i < n; ++i) w(i) *= 0.5 + r(i) / rmax;
        c = least_squares(samples, ncoef, &w);
    }
    return c;
}

}  // namespace

MotorQuadratic fit_motor_quadratic(const MotorMap& map, const TrainParams& params,
                                   FitStats* stats, int grid_points) {
    map.validate();
    const double f_lo = std::max(map.min_force(), params.motor_force_min_n);
    const double f_hi = std::min(map.max_force(), params.motor_force_max_n);
    const double v_hi = std::min(map.max_speed(), 1e9);
    // Crawl speeds only occur while (almost) stopped with near-zero force, so
    // the fit envelope starts at a small fraction of top speed.
    const double v_lo = std::max(map.min_speed(), 0.08 * v_hi);

    // Sample the power-capped operating envelope: points with |F v| beyond the
    // motor power bounds are unreachable and excluded from the fit.
    FitSamples samples;
    for (int i = 0; i < grid_points; ++i) {
        const double f = f_lo + (f_hi - f_lo) * i / (grid_points - 1.0);
        for (int j = 0; j < grid_points; ++j) {
            const double v = v_lo + (v_hi - v_lo) * j / (grid_points - 1.0);
            const double p = f * v;
            if (p > params.motor_power_max_w || p < params.motor_power_min_w) continue;
            const double zz = v * v;
            Eigen::VectorXd row(6);
            row << 1.0, zz, f, zz * f, zz * zz, f * f;
            samples.rows.push_back(row);
            samples.targets.push_back(motor_electrical_force(f, v, map));
        }
    }
    if (samples.rows.size() < 6)
        throw std::invalid_argument("motor map provides fewer than 6 usable samples");

    Eigen::VectorXd c = reweighted_least_squares(samples, 6);
    MotorQuadratic q{c(0), c(1), c(2), c(3), c(4), c(5)};

    if (!q.is_convex()) {
        // Clip the quadratic form to the nearest PSD matrix, then refit the
        // affine coefficients with the quadratic part held fixed.
        Eigen::Matrix2d form;
        form << q.p20, 0.5 * q.p11, 0.5 * q.p11, q.p02;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(form);
        Eigen::Vector2d ev = es.eigenvalues().cwiseMax(0.0);
        Eigen::Matrix2d psd = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        q.p20 = psd(0, 0);
        q.p11 = 2.0 * psd(0, 1);
        q.p02 = psd(1, 1);

        FitSamples affine;
        for (size_t i = 0; i < samples.rows.size(); ++i) {
            const Eigen::VectorXd& r = samples.rows[i];
            Eigen::VectorXd row(3);
            row << 1.0, r(1), r(2);
            affine.rows.push_back(row);
            affine.targets.push_back(samples.targets[i] - q.p11 * r(3) - q.p20 * r(4) -
                                     q.p02 * r(5));
        }
        Eigen::VectorXd c2 = least_squares(affine, 3);
        q.p00 = c2(0);
        q.p10 = c2(1);
        q.p01 = c2(2);
    }

    if (stats) {
        std::vector<double> fitted;
        fitted.reserve(samples.rows.size());
        for (const auto& r : samples.rows)
            fitted.push_back(q.eval(r(2), r(1)));
        *stats = residual_stats(fitted, samples.targets);
    }
    return q;
}

FuelCellLinear fit_fuelcell_linear(const FuelCellMap& map, double v_lo, double v_hi,
                                   const TrainParams& params, FitStats* stats,
                                   int grid_points) {
    map.validate();
    if (!(v_hi > v_lo) || v_lo <= 0) throw std::invalid_argument("degenerate speed range");
    const double p_lo = std::max(map.min_power(), params.fuelcell_power_min_w);
    const double p_hi = std::min(map.max_power(), params.fuelcell_power_max_w);
    if (!(p_hi > p_lo)) throw std::invalid_argument("degenerate fuel cell power range");

    FitSamples samples;
    for (int i = 0; i < grid_points; ++i) {
        const double p = p_lo + (p_hi - p_lo) * i / (grid_points - 1.0);
        for (int j = 0; j < grid_points; ++j) {
            const double v = v_lo + (v_hi - v_lo) * j / (grid_points - 1.0);
            const double f = p / v;
            Eigen::VectorXd row(2);
            row << f, v * v;
            samples.rows.push_back(row);
            samples.targets.push_back(f / map.eta_at(p));
        }
    }
    Eigen::VectorXd c = reweighted_least_squares(samples, 2);
    FuelCellLinear l{c(0), c(1)};
    if (!(l.p0 > 0))
        throw std::invalid_argument("fuel cell fit produced a nonpositive force coefficient");

    if (stats) {
        std::vector<double> fitted;
        fitted.reserve(samples.rows.size());
        for (const auto& r : samples.rows)
            fitted.push_back(l.eval(r(0), r(1)));
        *stats = residual_stats(fitted, samples.targets);
    }
    return l;
}

SocQuadratic fit_soc_quadratic(const BatteryParams& batt, double p_min_w, double p_max_w,
                               FitStats* stats, int grid_points) {
    if (!(p_max_w > p_min_w)) throw std::invalid_argument("degenerate battery power range");
    batt.validate(std::max(std::abs(p_min_w), std::abs(p_max_w)));

    FitSamples samples;
    for (int i = 0; i < grid_points; ++i) {
        const double p = p_min_w + (p_max_w - p_min_w) * i / (grid_points - 1.0);
        Eigen::VectorXd row(2);
        row << p * p, p;
        samples.rows.push_back(row);
        samples.targets.push_back(-exact_soc_rate(p, batt));
    }
    // Reweighting flattens the error peaks at the range ends (the exact rate
    // has a cubic tail the quadratic cannot follow).
    Eigen::VectorXd c = reweighted_least_squares(samples, 2);
    SocQuadratic q{c(0), c(1)};
    if (!(q.alpha > 0) || !(q.beta > 0))
        throw std::invalid_argument("SOC rate fit lost convexity (check power range)");

    if (stats) {
        std::vector<double> fitted;
        fitted.reserve(samples.rows.size());
        for (const auto& r : samples.rows)
            fitted.push_back(q.eval(r(1)));
        *stats = residual_stats(fitted, samples.targets);
    }
    return q;
}

SurrogateFits fit_all(const MotorMap& motor_map, const FuelCellMap& fc_map,
                      const TrainParams& params, const BatteryParams& batt) {
    SurrogateFits fits;
    fits.motor = fit_motor_quadratic(motor_map, params, &fits.motor_stats);
    const double v_hi = motor_map.max_speed();
    fits.fuelcell = fit_fuelcell_linear(fc_map, 0.2 * v_hi, v_hi, params, &fits.fuelcell_stats);
    fits.soc = fit_soc_quadratic(batt, params.battery_power_min_w, params.battery_power_max_w,
                                 &fits.soc_stats);
    return fits;
}

MotorMap default_motor_map(const TrainParams& params, int force_points, int speed_points) {
    MotorMap map;
    const double f_max = params.motor_force_max_n;
    const double v_max = 25.0;
    map.force_grid_n.resize(static_cast<size_t>(force_points));
    map.speed_grid_mps.resize(static_cast<size_t>(speed_points));
    for (int i = 0; i < force_points; ++i)
        map.force_grid_n[static_cast<size_t>(i)] =
            -f_max + 2.0 * f_max * i / (force_points - 1.0);
    for (int j = 0; j < speed_points; ++j)
        map.speed_grid_mps[static_cast<size_t>(j)] = 0.05 + (v_max - 0.05) * j / (speed_points - 1.0);

    // Peak 0.92 at moderate force and speed, drooping toward the envelope
    // edges (low speed, very small or very large force).
    map.eta.resize(force_points, speed_points);
    for (int i = 0; i < force_points; ++i) {
        const double u = std::abs(map.force_grid_n[static_cast<size_t>(i)]) / f_max;
        for (int j = 0; j < speed_points; ++j) {
            const double w = map.speed_grid_mps[static_cast<size_t>(j)] / v_max;
            double eta = 0.92 - 0.20 * (u - 0.45) * (u - 0.45) - 0.15 * (w - 0.55) * (w - 0.55);
            map.eta(i, j) = std::clamp(eta, 0.70, 0.92);
        }
    }
    return map;
}

FuelCellMap default_fuelcell_map(const TrainParams& params, int points) {
    FuelCellMap map;
    const double p_rated = params.fuelcell_power_max_w;
    const double p_peak = 0.30 * p_rated;  // efficiency peaks near 30% rated power
    const double p_hi = 1.15 * p_rated;
    map.power_grid_w.resize(static_cast<size_t>(points));
    map.eta.resize(static_cast<size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double p = p_hi * i / (points - 1.0);
        map.power_grid_w[static_cast<size_t>(i)] = p;
        double eta;
        if (p <= p_peak) {
            const double d = (p_peak - p) / p_peak;
            eta = 0.55 - 0.05 * d * d;
        } else {
            const double d = (p - p_peak) / p_rated;
            eta = 0.55 - 0.10 * d * d;
        }
        map.eta[static_cast<size_t>(i)] = std::clamp(eta, 0.05, 0.55);
    }
    return map;
}

}  // namespace hytrain
