#include <doctest.h>

#include <cmath>

#include "hytrain/powertrain.hpp"

using namespace hytrain;

namespace {

TrainParams table_params() { return TrainParams{}; }  // defaults carry the simulated values

// Scalar oracle for the SOC rate, written independently of the library path.
double soc_rate_oracle(double p_w, const BatteryParams& b) {
    const double uoc = b.open_circuit_voltage_v;
    const double r = b.internal_resistance_ohm;
    const double amps = (uoc - std::sqrt(uoc * uoc - 4.0 * p_w * r)) / (2.0 * r);
    return -amps / (3600.0 * b.capacity_wh / uoc) * 100.0;
}

}  // namespace

TEST_CASE("external force: Davis plus gravity") {
    const TrainParams p = table_params();
    CHECK(external_force(0.0, 0.0, p) == doctest::Approx(1743.0));
    CHECK(external_force(20.0, 0.0, p) == doctest::Approx(1743.0 + 76.4 * 20 + 6.2 * 400));
    CHECK(external_force(20.0, 0.0, p) == doctest::Approx(5751.0));
    const double theta = std::asin(0.01);
    CHECK(external_force(0.0, theta, p) ==
          doctest::Approx(1743.0 + 183000.0 * 9.80665 * 0.01).epsilon(1e-12));
    CHECK(external_force(0.0, theta, p) == doctest::Approx(19689.2).epsilon(1e-4));
}

TEST_CASE("kinetic step") {
    const TrainParams p = table_params();
    CHECK(p.equivalent_mass_kg() == doctest::Approx(194437.5));
    SUBCASE("coasting with no forces keeps z") {
        CHECK(kinetic_step(123.4, 0, 0, 0, 10.0, p) == doctest::Approx(123.4));
    }
    SUBCASE("full traction") {
        const double z1 = kinetic_step(400.0, 87000.0, 0.0, 5751.0, 10.0, p);
        CHECK(z1 == doctest::Approx(400.0 + 20.0 * 81249.0 / 194437.5).epsilon(1e-12));
        CHECK(z1 == doctest::Approx(408.357).epsilon(1e-5));
    }
    SUBCASE("full mechanical braking") {
        const double z1 = kinetic_step(100.0, 0.0, -180000.0, 0.0, 10.0, p);
        CHECK(z1 == doctest::Approx(81.485).epsilon(1e-4));
    }
}

TEST_CASE("exact SOC rate") {
    BatteryParams b;
    SUBCASE("zero power gives zero rate") { CHECK(exact_soc_rate(0.0, b) == doctest::Approx(0.0)); }
    SUBCASE("peak discharge at the discriminant boundary") {
        const double p_crit = b.open_circuit_voltage_v * b.open_circuit_voltage_v /
                              (4.0 * b.internal_resistance_ohm);
        const double expect = -b.open_circuit_voltage_v / (2.0 * b.internal_resistance_ohm) /
                              (3600.0 * b.capacity_ah()) * 100.0;
        CHECK(exact_soc_rate(p_crit, b) == doctest::Approx(expect).epsilon(1e-12));
        CHECK_THROWS_AS(exact_soc_rate(p_crit * 1.01, b), std::domain_error);
    }
    SUBCASE("matches the scalar oracle at 300 kW") {
        CHECK(exact_soc_rate(300e3, b) == doctest::Approx(soc_rate_oracle(300e3, b)).epsilon(1e-14));
        // discharging 300 kW drains SOC
        CHECK(exact_soc_rate(300e3, b) < 0);
        // charging raises it
        CHECK(exact_soc_rate(-300e3, b) > 0);
    }
    SUBCASE("discharge rate is strictly increasing in power") {
        double prev = -(-1.0);  // -rate at the left end computed in the loop
        bool first = true;
        for (double p_w = -600e3; p_w <= 600e3; p_w += 25e3) {
            const double drain = -exact_soc_rate(p_w, b);
            if (!first) CHECK(drain > prev);
            prev = drain;
            first = false;
        }
    }
}

TEST_CASE("exact fuel rate") {
    SUBCASE("definition at eta = 0.5") {
        FuelCellMap map;
        map.power_grid_w = {0.0, 1e6};
        map.eta = {0.5, 0.5};
        CHECK(exact_fuel_rate(1000.0, 400.0, map) == doctest::Approx(2000.0));
    }
    SUBCASE("ideal fuel cell returns the force itself") {
        FuelCellMap map;
        map.power_grid_w = {0.0, 1e6};
        map.eta = {1.0, 1.0};
        for (double f : {10.0, 500.0, 20000.0})
            CHECK(exact_fuel_rate(f, 100.0, map) == doctest::Approx(f));
    }
    SUBCASE("mid-map point against hand interpolation") {
        FuelCellMap map;
        map.power_grid_w = {10e3, 20e3, 40e3};
        map.eta = {0.40, 0.50, 0.46};
        // F sqrt(z) = 2500 * 10 = 25 kW -> between rows 1 and 2:
        // eta = 0.50 + (25-20)/(40-20) * (0.46-0.50) = 0.49
        const double eta_hand = 0.49;
        CHECK(exact_fuel_rate(2500.0, 100.0, map) == doctest::Approx(2500.0 / eta_hand));
    }
    SUBCASE("out of range throws") {
        FuelCellMap map;
        map.power_grid_w = {10e3, 20e3};
        map.eta = {0.4, 0.5};
        CHECK_THROWS_AS(exact_fuel_rate(5000.0, 100.0, map), std::domain_error);
    }
}

TEST_CASE("motor quadratic fit recovers an exact member of the family") {
    const TrainParams p = table_params();
    // build a map whose electrical force is exactly a convex quadratic; the
    // coefficients are chosen so every term contributes visibly over the grid
    const double q00 = 2000, q10 = 3.0, q01 = 1.12, q11 = 2e-5, q20 = 2e-3, q02 = 1e-6;
    auto q = [&](double f, double z) {
        return q00 + q10 * z + q01 * f + q11 * z * f + q20 * z * z + q02 * f * f;
    };
    // grids chosen to coincide with the 50x50 fit lattice so the sampled
    // targets are exact members of the quadratic family
    MotorMap map;
    const int n = 50;
    for (int i = 0; i < n; ++i)
        map.force_grid_n.push_back(500.0 + (87000.0 - 500.0) * i / (n - 1.0));
    for (int j = 0; j < n; ++j)
        map.speed_grid_mps.push_back(0.08 * 25.0 + (25.0 - 0.08 * 25.0) * j / (n - 1.0));
    map.eta.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double f = map.force_grid_n[static_cast<size_t>(i)];
            const double v = map.speed_grid_mps[static_cast<size_t>(j)];
            map.eta(i, j) = f / q(f, v * v);
        }
    FitStats stats;
    MotorQuadratic fit = fit_motor_quadratic(map, p, &stats, n);
    CHECK(fit.p00 == doctest::Approx(q00).epsilon(1e-9));
    CHECK(fit.p10 == doctest::Approx(q10).epsilon(1e-9));
    CHECK(fit.p01 == doctest::Approx(q01).epsilon(1e-9));
    CHECK(fit.p11 == doctest::Approx(q11).epsilon(1e-9));
    CHECK(fit.p20 == doctest::Approx(q20).epsilon(1e-9));
    CHECK(fit.p02 == doctest::Approx(q02).epsilon(1e-9));
    CHECK(stats.max_rel_err < 1e-9);
    CHECK(fit.is_convex());
}

TEST_CASE("loss-free motor fits to the identity") {
    const TrainParams p = table_params();
    MotorMap map;
    const int n = 21;
    for (int i = 0; i < n; ++i) map.force_grid_n.push_back(-87000.0 + 174000.0 * i / (n - 1.0));
    for (int j = 0; j < n; ++j) map.speed_grid_mps.push_back(0.5 + 24.5 * j / (n - 1.0));
    map.eta = Eigen::MatrixXd::Ones(n, n);
    FitStats stats;
    MotorQuadratic fit = fit_motor_quadratic(map, p, &stats);
    CHECK(fit.p01 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(fit.p00) < 1e-6);
    CHECK(std::abs(fit.p10) < 1e-9);
    CHECK(std::abs(fit.p20) < 1e-12);
    CHECK(std::abs(fit.p02) < 1e-12);
}

TEST_CASE("default maps meet the surrogate quality targets") {
    const TrainParams p = table_params();
    const BatteryParams b;
    const MotorMap mmap = default_motor_map(p);
    const FuelCellMap fmap = default_fuelcell_map(p);
    SurrogateFits fits = fit_all(mmap, fmap, p, b);

    CHECK(fits.motor.is_convex());
    CHECK(fits.motor_stats.max_rel_err < 0.03);
    CHECK(fits.fuelcell.p0 > 0);
    CHECK(fits.fuelcell_stats.max_rel_err < 0.05);
    CHECK(fits.soc.alpha > 0);
    CHECK(fits.soc.beta > 0);
    CHECK(fits.soc_stats.max_rel_err < 0.02);

    SUBCASE("convexity certificate: eigenvalues of the quadratic form") {
        const auto ev = fits.motor.form_eigenvalues();
        CHECK(ev.minCoeff() >= -1e-12);
    }
    SUBCASE("fits are deterministic") {
        SurrogateFits again = fit_all(mmap, fmap, p, b);
        CHECK(again.motor.p00 == fits.motor.p00);
        CHECK(again.motor.p11 == fits.motor.p11);
        CHECK(again.fuelcell.p0 == fits.fuelcell.p0);
        CHECK(again.soc.alpha == fits.soc.alpha);
    }
    SUBCASE("self-consistency of the reported residual") {
        // re-measure the motor fit against the map on the same grid
        double worst = 0, scale = 0;
        const int n = 50;
        const double f_lo = mmap.min_force(), f_hi = mmap.max_force();
        const double v_hi = mmap.max_speed();
        const double v_lo = std::max(mmap.min_speed(), 0.08 * v_hi);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double f = f_lo + (f_hi - f_lo) * i / (n - 1.0);
                const double v = v_lo + (v_hi - v_lo) * j / (n - 1.0);
                if (f * v > p.motor_power_max_w || f * v < p.motor_power_min_w) continue;
                const double target = motor_electrical_force(f, v, mmap);
                scale = std::max(scale, std::abs(target));
                worst = std::max(worst, std::abs(fits.motor.eval(f, v * v) - target));
            }
        CHECK(worst / scale <= fits.motor_stats.max_rel_err + 1e-12);
    }
}

TEST_CASE("fuel cell linear fit: constant efficiency is exact") {
    const TrainParams p = table_params();
    FuelCellMap map;
    map.power_grid_w = {1e3, 50e3, 120e3};
    map.eta = {0.48, 0.48, 0.48};
    FitStats stats;
    FuelCellLinear fit = fit_fuelcell_linear(map, 5.0, 25.0, p, &stats);
    CHECK(fit.p0 == doctest::Approx(1.0 / 0.48).epsilon(1e-9));
    CHECK(std::abs(fit.p1) < 1e-9);
    CHECK(stats.max_rel_err < 1e-9);
}

TEST_CASE("fuel cell fit rejects degenerate input") {
    const TrainParams p = table_params();
    FuelCellMap empty;
    CHECK_THROWS(fit_fuelcell_linear(empty, 5.0, 25.0, p));
}

TEST_CASE("SOC quadratic fit") {
    SUBCASE("small-resistance limit") {
        BatteryParams b;
        b.internal_resistance_ohm = 1e-6;
        FitStats stats;
        SocQuadratic q = fit_soc_quadratic(b, -600e3, 600e3, &stats);
        const double beta_expect = 100.0 / (b.open_circuit_voltage_v * 3600.0 * b.capacity_ah());
        CHECK(q.beta == doctest::Approx(beta_expect).epsilon(1e-6));
        // alpha follows the Taylor expansion beta R / Uoc^2 and vanishes with R
        const double uoc2 = b.open_circuit_voltage_v * b.open_circuit_voltage_v;
        CHECK(q.alpha == doctest::Approx(beta_expect * b.internal_resistance_ohm / uoc2)
                             .epsilon(0.05));
        CHECK(q.alpha < 1e-11 * beta_expect);
    }
    SUBCASE("no constant term by construction") {
        BatteryParams b;
        SocQuadratic q = fit_soc_quadratic(b, -600e3, 600e3);
        CHECK(q.eval(0.0) == 0.0);
    }
    SUBCASE("residual within 2% of the peak rate over the battery range") {
        BatteryParams b;
        FitStats stats;
        SocQuadratic q = fit_soc_quadratic(b, -600e3, 600e3, &stats);
        CHECK(stats.max_rel_err < 0.02);
        // sign convention: positive quadratic value = discharging
        CHECK(q.eval(300e3) > 0);
        CHECK(q.eval(300e3) == doctest::Approx(-soc_rate_oracle(300e3, b)).epsilon(0.03));
    }
}

TEST_CASE("validation catches broken inputs") {
    TrainParams p;
    p.fuelcell_power_min_w = 0.0;  // idling must stay prohibited
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);

    BatteryParams b;
    b.internal_resistance_ohm = 1.0;  // 4 P R > Uoc^2 at 600 kW
    CHECK_THROWS_AS(b.validate(600e3), std::invalid_argument);

    MotorMap map;
    map.force_grid_n = {0.0, 1.0};
    map.speed_grid_mps = {1.0, 2.0};
    map.eta.resize(2, 2);
    map.eta << 0.9, 0.9, 0.9, 1.1;  // eta > 1
    CHECK_THROWS_AS(map.validate(), std::invalid_argument);
}
