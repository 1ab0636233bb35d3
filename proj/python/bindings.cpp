#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "hytrain/conic_builder.hpp"
#include "hytrain/powertrain.hpp"
#include "hytrain/route.hpp"
#include "hytrain/route_gen.hpp"
#include "hytrain/simulator.hpp"
#include "hytrain/solver.hpp"
#include "hytrain/trajectory.hpp"

namespace py = pybind11;
using namespace hytrain;

namespace {

// Solved pipeline stage bundled for python: trajectories plus reports.
struct PipelineResult {
    Trajectories traj;
    TightnessReport tightness;
    SimulationReport sim;
    SolveStatus status = SolveStatus::kOptimal;
    double solve_seconds = 0;
    int newton_iterations = 0;
};

PipelineResult solve_concurrent_py(const SpatialGrid& grid, const TrainParams& params,
                                   const BatteryParams& batt, const SurrogateFits& fits,
                                   const MotorMap& mmap, const FuelCellMap& fmap,
                                   double tightness_threshold) {
    PipelineResult out;
    BuiltProgram bp = build_concurrent(grid, params, batt, fits);
    SolverResult res = solve(bp.program);
    out.status = res.status;
    out.solve_seconds = res.wall_seconds;
    out.newton_iterations = res.newton_iterations;
    if (res.status != SolveStatus::kOptimal) return out;
    out.traj = extract(bp.map, res, grid, params);
    out.tightness = check_tightness(out.traj, fits, params, tightness_threshold);
    out.sim = simulate(out.traj, grid, params, batt, mmap, fmap);
    out.sim.surrogate_fuel_j = surrogate_fuel_j(out.traj, fits, params);
    return out;
}

PipelineResult solve_sequential_py(const SpatialGrid& grid, const TrainParams& params,
                                   const BatteryParams& batt, const SurrogateFits& fits,
                                   const MotorMap& mmap, const FuelCellMap& fmap,
                                   double tightness_threshold) {
    PipelineResult out;
    BuiltProgram speed = build_speed_only(grid, params);
    SolverResult r1 = solve(speed.program);
    out.status = r1.status;
    if (r1.status != SolveStatus::kOptimal) return out;
    Trajectories s1 = extract(speed.map, r1, grid, params);
    FixedProfile prof;
    prof.v = s1.v;
    prof.z = s1.z;
    prof.motor_force = s1.motor_force;
    prof.brake_force = s1.brake_force;
    prof.gamma = s1.inv_speed;
    BuiltProgram ems = build_ems_given_speed(grid, params, batt, fits, prof);
    SolverResult r2 = solve(ems.program);
    out.status = r2.status;
    out.solve_seconds = r1.wall_seconds + r2.wall_seconds;
    out.newton_iterations = r1.newton_iterations + r2.newton_iterations;
    if (r2.status != SolveStatus::kOptimal) return out;
    out.traj = merge_sequential(s1, extract(ems.map, r2, grid, params));
    out.tightness = check_tightness(out.traj, fits, params, tightness_threshold);
    out.sim = simulate(out.traj, grid, params, batt, mmap, fmap);
    out.sim.surrogate_fuel_j = surrogate_fuel_j(out.traj, fits, params);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "fuel cell hybrid train speed and energy management optimization";

    py::class_<TrainParams>(m, "TrainParams")
        .def(py::init<>())
        .def_readwrite("mass_kg", &TrainParams::mass_kg)
        .def_readwrite("rotating_mass_frac", &TrainParams::rotating_mass_frac)
        .def_readwrite("davis_a_n", &TrainParams::davis_a_n)
        .def_readwrite("davis_b_kg_per_s", &TrainParams::davis_b_kg_per_s)
        .def_readwrite("davis_c_kg_per_m", &TrainParams::davis_c_kg_per_m)
        .def_readwrite("gravity_mps2", &TrainParams::gravity_mps2)
        .def_readwrite("aux_power_w", &TrainParams::aux_power_w)
        .def_readwrite("motor_force_min_n", &TrainParams::motor_force_min_n)
        .def_readwrite("motor_force_max_n", &TrainParams::motor_force_max_n)
        .def_readwrite("motor_power_min_w", &TrainParams::motor_power_min_w)
        .def_readwrite("motor_power_max_w", &TrainParams::motor_power_max_w)
        .def_readwrite("brake_force_min_n", &TrainParams::brake_force_min_n)
        .def_readwrite("fuelcell_stacks", &TrainParams::fuelcell_stacks)
        .def_readwrite("fuelcell_power_min_w", &TrainParams::fuelcell_power_min_w)
        .def_readwrite("fuelcell_power_max_w", &TrainParams::fuelcell_power_max_w)
        .def_readwrite("battery_power_min_w", &TrainParams::battery_power_min_w)
        .def_readwrite("battery_power_max_w", &TrainParams::battery_power_max_w)
        .def("equivalent_mass_kg", &TrainParams::equivalent_mass_kg)
        .def("validate", &TrainParams::validate);

    py::class_<BatteryParams>(m, "BatteryParams")
        .def(py::init<>())
        .def_readwrite("open_circuit_voltage_v", &BatteryParams::open_circuit_voltage_v)
        .def_readwrite("internal_resistance_ohm", &BatteryParams::internal_resistance_ohm)
        .def_readwrite("capacity_wh", &BatteryParams::capacity_wh)
        .def_readwrite("soc_min_pct", &BatteryParams::soc_min_pct)
        .def_readwrite("soc_max_pct", &BatteryParams::soc_max_pct)
        .def_readwrite("soc_init_pct", &BatteryParams::soc_init_pct)
        .def("capacity_ah", &BatteryParams::capacity_ah);

    py::class_<MotorMap>(m, "MotorMap")
        .def("eta_at", &MotorMap::eta_at)
        .def_readonly("force_grid_n", &MotorMap::force_grid_n)
        .def_readonly("speed_grid_mps", &MotorMap::speed_grid_mps);

    py::class_<FuelCellMap>(m, "FuelCellMap")
        .def("eta_at", &FuelCellMap::eta_at)
        .def_readonly("power_grid_w", &FuelCellMap::power_grid_w)
        .def_readonly("eta", &FuelCellMap::eta);

    py::class_<MotorQuadratic>(m, "MotorQuadratic")
        .def_readonly("p00", &MotorQuadratic::p00)
        .def_readonly("p10", &MotorQuadratic::p10)
        .def_readonly("p01", &MotorQuadratic::p01)
        .def_readonly("p11", &MotorQuadratic::p11)
        .def_readonly("p20", &MotorQuadratic::p20)
        .def_readonly("p02", &MotorQuadratic::p02)
        .def("eval", &MotorQuadratic::eval)
        .def("is_convex", &MotorQuadratic::is_convex, py::arg("tol") = 1e-12);

    py::class_<FuelCellLinear>(m, "FuelCellLinear")
        .def_readonly("p0", &FuelCellLinear::p0)
        .def_readonly("p1", &FuelCellLinear::p1)
        .def("eval", &FuelCellLinear::eval);

    py::class_<SocQuadratic>(m, "SocQuadratic")
        .def_readonly("alpha", &SocQuadratic::alpha)
        .def_readonly("beta", &SocQuadratic::beta)
        .def("eval", &SocQuadratic::eval);

    py::class_<FitStats>(m, "FitStats")
        .def_readonly("max_abs_err", &FitStats::max_abs_err)
        .def_readonly("max_rel_err", &FitStats::max_rel_err)
        .def_readonly("mean_rel_err", &FitStats::mean_rel_err);

    py::class_<SurrogateFits>(m, "SurrogateFits")
        .def_readonly("motor", &SurrogateFits::motor)
        .def_readonly("motor_stats", &SurrogateFits::motor_stats)
        .def_readonly("fuelcell", &SurrogateFits::fuelcell)
        .def_readonly("fuelcell_stats", &SurrogateFits::fuelcell_stats)
        .def_readonly("soc", &SurrogateFits::soc)
        .def_readonly("soc_stats", &SurrogateFits::soc_stats);

    py::class_<Station>(m, "Station")
        .def(py::init<>())
        .def_readwrite("position_m", &Station::position_m)
        .def_readwrite("dwell_s", &Station::dwell_s);

    py::class_<RouteProfile>(m, "RouteProfile")
        .def(py::init<>())
        .def_readwrite("total_length_m", &RouteProfile::total_length_m)
        .def_readwrite("target_time_s", &RouteProfile::target_time_s)
        .def_readwrite("stations", &RouteProfile::stations)
        .def("validate", &RouteProfile::validate)
        .def("gradient_at", &RouteProfile::gradient_at)
        .def("speed_limit_at", &RouteProfile::speed_limit_at);

    py::class_<SpatialGrid>(m, "SpatialGrid")
        .def_readonly("ds_m", &SpatialGrid::ds_m)
        .def_readonly("gradient_rad", &SpatialGrid::gradient_rad)
        .def_readonly("position_m", &SpatialGrid::position_m)
        .def_readonly("v_max_mps", &SpatialGrid::v_max_mps)
        .def_readonly("z_stop", &SpatialGrid::z_stop)
        .def_readonly("target_time_s", &SpatialGrid::target_time_s)
        .def("num_samples", &SpatialGrid::num_samples)
        .def("driving_sample_count", &SpatialGrid::driving_sample_count)
        .def("time_lower_bound_s", &SpatialGrid::time_lower_bound_s);

    py::class_<DiscretizeOptions>(m, "DiscretizeOptions")
        .def(py::init<>())
        .def_readwrite("ds_nominal_m", &DiscretizeOptions::ds_nominal_m)
        .def_readwrite("z_stop", &DiscretizeOptions::z_stop)
        .def_readwrite("dwell_samples_per_stop", &DiscretizeOptions::dwell_samples_per_stop);

    py::class_<RouteGenOptions>(m, "RouteGenOptions")
        .def(py::init<>())
        .def_readwrite("length_m", &RouteGenOptions::length_m)
        .def_readwrite("stops", &RouteGenOptions::stops)
        .def_readwrite("seed", &RouteGenOptions::seed)
        .def_readwrite("dwell_s", &RouteGenOptions::dwell_s)
        .def_readwrite("tau_slack", &RouteGenOptions::tau_slack);

    py::class_<Trajectories>(m, "Trajectories")
        .def_readonly("num_samples", &Trajectories::num_samples)
        .def_readonly("v", &Trajectories::v)
        .def_readonly("z", &Trajectories::z)
        .def_readonly("soc", &Trajectories::soc)
        .def_readonly("soc_drop", &Trajectories::soc_drop)
        .def_readonly("inv_speed", &Trajectories::inv_speed)
        .def_readonly("omega", &Trajectories::omega)
        .def_readonly("motor_force", &Trajectories::motor_force)
        .def_readonly("brake_force", &Trajectories::brake_force)
        .def_readonly("fuelcell_force", &Trajectories::fuelcell_force)
        .def_readonly("battery_force", &Trajectories::battery_force)
        .def_readonly("time_s", &Trajectories::time_s)
        .def_readonly("position_m", &Trajectories::position_m)
        .def_readonly("journey_time_s", &Trajectories::journey_time_s);

    py::class_<TightnessEntry>(m, "TightnessEntry")
        .def_readonly("max_slack", &TightnessEntry::max_slack)
        .def_readonly("worst_sample", &TightnessEntry::worst_sample)
        .def_readonly("ok", &TightnessEntry::ok);

    py::class_<TightnessReport>(m, "TightnessReport")
        .def_readonly("threshold", &TightnessReport::threshold)
        .def_readonly("traction_balance", &TightnessReport::traction_balance)
        .def_readonly("speed_square", &TightnessReport::speed_square)
        .def_readonly("speed_inverse", &TightnessReport::speed_inverse)
        .def_readonly("soc_rate", &TightnessReport::soc_rate)
        .def("all_ok", &TightnessReport::all_ok)
        .def("summary", &TightnessReport::summary);

    py::class_<SimulationReport>(m, "SimulationReport")
        .def_readonly("fuel_j", &SimulationReport::fuel_j)
        .def_readonly("fuel_kg_h2", &SimulationReport::fuel_kg_h2)
        .def_readonly("fuel_j_per_km", &SimulationReport::fuel_j_per_km)
        .def_readonly("surrogate_fuel_j", &SimulationReport::surrogate_fuel_j)
        .def_readonly("journey_time_s", &SimulationReport::journey_time_s)
        .def_readonly("terminal_soc_pct", &SimulationReport::terminal_soc_pct)
        .def_readonly("soc_drift_pp", &SimulationReport::soc_drift_pp)
        .def_readonly("v_rms_dev_frac", &SimulationReport::v_rms_dev_frac)
        .def_readonly("stalled", &SimulationReport::stalled)
        .def_readonly("v_sim", &SimulationReport::v_sim)
        .def_readonly("soc_sim", &SimulationReport::soc_sim)
        .def("summary", &SimulationReport::summary);

    py::class_<ComparisonReport>(m, "ComparisonReport")
        .def_readonly("fuel_a_j", &ComparisonReport::fuel_a_j)
        .def_readonly("fuel_b_j", &ComparisonReport::fuel_b_j)
        .def_readonly("delta_percent", &ComparisonReport::delta_percent)
        .def("summary", &ComparisonReport::summary);

    py::class_<PipelineResult>(m, "PipelineResult")
        .def_readonly("traj", &PipelineResult::traj)
        .def_readonly("tightness", &PipelineResult::tightness)
        .def_readonly("sim", &PipelineResult::sim)
        .def_readonly("solve_seconds", &PipelineResult::solve_seconds)
        .def_readonly("newton_iterations", &PipelineResult::newton_iterations)
        .def_property_readonly("status",
                               [](const PipelineResult& r) { return status_name(r.status); });

    m.def("external_force", &external_force, py::arg("speed_mps"), py::arg("gradient_rad"),
          py::arg("params"));
    m.def("kinetic_step", &kinetic_step);
    m.def("exact_soc_rate", &exact_soc_rate);
    m.def("exact_fuel_rate", &exact_fuel_rate);
    m.def("default_motor_map", &default_motor_map, py::arg("params"),
          py::arg("force_points") = 49, py::arg("speed_points") = 49);
    m.def("default_fuelcell_map", &default_fuelcell_map, py::arg("params"),
          py::arg("points") = 81);
    m.def("fit_all", &fit_all);
    m.def("generate_route", &generate_route);
    m.def("load_route", &load_route, py::arg("route_csv"), py::arg("stations_csv"),
          py::arg("target_time_s"));
    m.def("suggest_tau", &suggest_tau, py::arg("route"), py::arg("slack_factor") = 1.3);
    m.def("discretize", &discretize);
    m.def("solve_concurrent", &solve_concurrent_py, py::arg("grid"), py::arg("params"),
          py::arg("battery"), py::arg("fits"), py::arg("motor_map"), py::arg("fuelcell_map"),
          py::arg("tightness_threshold") = 1e-3);
    m.def("solve_sequential", &solve_sequential_py, py::arg("grid"), py::arg("params"),
          py::arg("battery"), py::arg("fits"), py::arg("motor_map"), py::arg("fuelcell_map"),
          py::arg("tightness_threshold") = 1e-3);
    m.def("compare", &compare, py::arg("a"), py::arg("b"), py::arg("params"));
}
