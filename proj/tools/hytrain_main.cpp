// Command-line front end: route generation, surrogate fitting, and the
// optimize -> simulate -> compare pipelines.
//
// Exit codes: 0 success (optimal and tight), 1 usage/input error, 2 optimal
// but a relaxed constraint shows slack, 3 infeasible, 4 infeasible or invalid
// surrogate fit, 5 solver failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "hytrain/conic_builder.hpp"
#include "hytrain/powertrain.hpp"
#include "hytrain/route.hpp"
#include "hytrain/route_gen.hpp"
#include "hytrain/run_config.hpp"
#include "hytrain/simulator.hpp"
#include "hytrain/solver.hpp"
#include "hytrain/trajectory.hpp"

namespace fs = std::filesystem;
using namespace hytrain;

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

void write_trajectory_csv(const std::string& path, const Trajectories& t,
                          const std::string& hash) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# config_hash=" << hash << "\n";
    out << "i,s_m,t_s,v_mps,z,zeta_pct,gamma,omega,F_m_n,F_brk_n,F_fc_n,F_batt_n,P_m_w,P_fc_w,"
           "P_batt_w\n";
    for (int i = 0; i < t.num_samples; ++i) {
        const auto si = static_cast<size_t>(i);
        out << i << "," << fmt(t.position_m[si]) << "," << fmt(t.time_s[si]) << ","
            << fmt(t.v[si]) << "," << fmt(t.z[si]) << "," << fmt(t.soc[si]) << ","
            << fmt(t.inv_speed[si]) << "," << fmt(t.omega[si]) << "," << fmt(t.motor_force[si])
            << "," << fmt(t.brake_force[si]) << "," << fmt(t.fuelcell_force[si]) << ","
            << fmt(t.battery_force[si]) << "," << fmt(t.motor_power_w[si]) << ","
            << fmt(t.fuelcell_power_w[si]) << "," << fmt(t.battery_power_w[si]) << "\n";
    }
}

void write_simulation_csv(const std::string& path, const SimulationReport& rep,
                          const Trajectories& t, const std::string& hash) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# config_hash=" << hash << "\n";
    out << "i,s_m,t_s,v_sim_mps,zeta_sim_pct,P_m_elec_w,P_fc_w,P_batt_w\n";
    for (int i = 0; i < t.num_samples; ++i) {
        const auto si = static_cast<size_t>(i);
        out << i << "," << fmt(t.position_m[si]) << "," << fmt(t.time_s[si]) << ","
            << fmt(rep.v_sim[si]) << "," << fmt(rep.soc_sim[si]) << ","
            << fmt(rep.motor_power_elec_w[si]) << "," << fmt(rep.fuelcell_power_w[si]) << ","
            << fmt(rep.battery_power_w[si]) << "\n";
    }
}

void write_text(const std::string& path, const std::string& hash, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# config_hash=" << hash << "\n" << body;
}

struct PipelineArtifacts {
    Trajectories traj;
    TightnessReport tightness;
    SimulationReport sim;
    bool infeasible = false;
    bool solver_failed = false;
    std::string message;
};

PipelineArtifacts run_concurrent(const SpatialGrid& grid, const TrainParams& params,
                                 const BatteryParams& batt, const SurrogateFits& fits,
                                 const MotorMap& mmap, const FuelCellMap& fmap,
                                 const RunConfig& cfg, const std::string& log_path) {
    PipelineArtifacts art;
    BuilderOptions bopt;
    bopt.w_gamma = cfg.w_gamma;
    bopt.w_omega = cfg.w_omega;
    try {
        BuiltProgram bp = build_concurrent(grid, params, batt, fits, bopt);
        for (const auto& w : bp.diagnostics.warnings) std::cerr << "warning: " << w << "\n";
        SolverResult res = solve(bp.program, cfg.solver);
        write_text(log_path, cfg.config_hash,
                   format_iteration_log(res.log) + "status " + status_name(res.status) + "\n" +
                       "newton_iterations " + std::to_string(res.newton_iterations) + "\n" +
                       "wall_seconds " + fmt(res.wall_seconds) + "\n" + "kkt_dim " +
                       fmt(res.kkt_dim) + " kkt_nnz " + fmt(res.kkt_nonzeros) + " factor_nnz " +
                       fmt(res.factor_nonzeros) + "\n");
        if (res.status == SolveStatus::kInfeasible) {
            art.infeasible = true;
            art.message = res.message;
            return art;
        }
        if (res.status != SolveStatus::kOptimal) {
            art.solver_failed = true;
            art.message = res.message;
            return art;
        }
        art.traj = extract(bp.map, res, grid, params);
        art.tightness = check_tightness(art.traj, fits, params, cfg.tightness_threshold);
        art.sim = simulate(art.traj, grid, params, batt, mmap, fmap);
        art.sim.surrogate_fuel_j = surrogate_fuel_j(art.traj, fits, params);
    } catch (const InfeasibleError& e) {
        art.infeasible = true;
        art.message = e.what();
    }
    return art;
}

PipelineArtifacts run_sequential(const SpatialGrid& grid, const TrainParams& params,
                                 const BatteryParams& batt, const SurrogateFits& fits,
                                 const MotorMap& mmap, const FuelCellMap& fmap,
                                 const RunConfig& cfg, const std::string& log_prefix) {
    PipelineArtifacts art;
    BuilderOptions bopt;
    bopt.w_gamma = cfg.w_gamma;
    bopt.w_omega = cfg.w_omega;
    try {
        BuiltProgram speed = build_speed_only(grid, params, bopt);
        SolverResult res1 = solve(speed.program, cfg.solver);
        write_text(log_prefix + "_speed.log", cfg.config_hash,
                   format_iteration_log(res1.log) + "status " + status_name(res1.status) + "\n");
        if (res1.status == SolveStatus::kInfeasible) {
            art.infeasible = true;
            art.message = res1.message;
            return art;
        }
        if (res1.status != SolveStatus::kOptimal) {
            art.solver_failed = true;
            art.message = res1.message;
            return art;
        }
        Trajectories step1 = extract(speed.map, res1, grid, params);

        FixedProfile prof;
        prof.v = step1.v;
        prof.z = step1.z;
        prof.motor_force = step1.motor_force;
        prof.brake_force = step1.brake_force;
        prof.gamma = step1.inv_speed;
        BuiltProgram ems = build_ems_given_speed(grid, params, batt, fits, prof, bopt);
        SolverResult res2 = solve(ems.program, cfg.solver);
        write_text(log_prefix + "_ems.log", cfg.config_hash,
                   format_iteration_log(res2.log) + "status " + status_name(res2.status) + "\n");
        if (res2.status == SolveStatus::kInfeasible) {
            art.infeasible = true;
            art.message = res2.message;
            return art;
        }
        if (res2.status != SolveStatus::kOptimal) {
            art.solver_failed = true;
            art.message = res2.message;
            return art;
        }
        Trajectories step2 = extract(ems.map, res2, grid, params);
        art.traj = merge_sequential(step1, step2);
        art.tightness = check_tightness(art.traj, fits, params, cfg.tightness_threshold);
        art.sim = simulate(art.traj, grid, params, batt, mmap, fmap);
        art.sim.surrogate_fuel_j = surrogate_fuel_j(art.traj, fits, params);
    } catch (const InfeasibleError& e) {
        art.infeasible = true;
        art.message = e.what();
    }
    return art;
}

int cmd_optimize(const RunConfig& cfg) {
    TrainParams params;
    BatteryParams batt;
    load_params_json(cfg.params_json, &params, &batt);
    MotorMap mmap = cfg.motor_map_csv.empty() ? default_motor_map(params)
                                              : load_motor_map_csv(cfg.motor_map_csv);
    FuelCellMap fmap = cfg.fuelcell_map_csv.empty() ? default_fuelcell_map(params)
                                                    : load_fuelcell_map_csv(cfg.fuelcell_map_csv);
    RouteProfile route = load_route(cfg.route_csv, cfg.stations_csv,
                                    cfg.tau_s > 0 ? cfg.tau_s : 0.0);
    if (cfg.tau_s <= 0) route.target_time_s = suggest_tau(route);

    DiscretizeOptions dopt;
    dopt.ds_nominal_m = cfg.ds_nominal_m;
    dopt.z_stop = cfg.z_stop;
    dopt.dwell_samples_per_stop = cfg.dwell_samples;
    SpatialGrid grid = discretize(route, dopt);

    SurrogateFits fits = fit_all(mmap, fmap, params, batt);

    fs::create_directories(cfg.out_dir);
    const std::string od = cfg.out_dir + "/";

    std::optional<PipelineArtifacts> conc, seq;
    if (cfg.pipeline == "concurrent" || cfg.pipeline == "both")
        conc = run_concurrent(grid, params, batt, fits, mmap, fmap, cfg, od + "concurrent_solver.log");
    if (cfg.pipeline == "sequential" || cfg.pipeline == "both")
        seq = run_sequential(grid, params, batt, fits, mmap, fmap, cfg, od + "sequential_solver");

    bool any_infeasible = false, any_failed = false, any_slack = false;
    auto emit = [&](const char* name, PipelineArtifacts& art) {
        if (art.infeasible) {
            std::cerr << name << ": infeasible: " << art.message << "\n";
            any_infeasible = true;
            return;
        }
        if (art.solver_failed) {
            std::cerr << name << ": solver failed: " << art.message << "\n";
            any_failed = true;
            return;
        }
        write_trajectory_csv(od + name + std::string("_trajectory.csv"), art.traj,
                             cfg.config_hash);
        write_simulation_csv(od + name + std::string("_simulation.csv"), art.sim, art.traj,
                             cfg.config_hash);
        write_text(od + name + std::string("_tightness.txt"), cfg.config_hash,
                   art.tightness.summary());
        write_text(od + name + std::string("_simulation.txt"), cfg.config_hash,
                   art.sim.summary());
        if (!art.tightness.all_ok()) any_slack = true;
        std::cout << name << ": fuel " << fmt(art.sim.fuel_j) << " J ("
                  << fmt(art.sim.fuel_kg_h2) << " kg H2), time " << fmt(art.sim.journey_time_s)
                  << " s, terminal SOC " << fmt(art.sim.terminal_soc_pct) << " %, tight "
                  << (art.tightness.all_ok() ? "yes" : "NO") << "\n";
    };
    if (conc) emit("concurrent", *conc);
    if (seq) emit("sequential", *seq);

    if (conc && seq && !any_infeasible && !any_failed) {
        ComparisonReport cr = compare(conc->sim, seq->sim, params);
        write_text(od + "comparison.txt", cfg.config_hash, cr.summary());
        std::cout << "concurrent uses " << fmt(cr.delta_percent)
                  << " % less exact-model fuel than sequential\n";
    }

    if (any_infeasible) return 3;
    if (any_failed) return 5;
    if (any_slack) return 2;
    return 0;
}

int cmd_fit(const RunConfig& cfg, const std::string& out_path) {
    TrainParams params;
    BatteryParams batt;
    load_params_json(cfg.params_json, &params, &batt);
    MotorMap mmap = cfg.motor_map_csv.empty() ? default_motor_map(params)
                                              : load_motor_map_csv(cfg.motor_map_csv);
    FuelCellMap fmap = cfg.fuelcell_map_csv.empty() ? default_fuelcell_map(params)
                                                    : load_fuelcell_map_csv(cfg.fuelcell_map_csv);
    SurrogateFits fits;
    try {
        fits = fit_all(mmap, fmap, params, batt);
    } catch (const std::invalid_argument& e) {
        std::cerr << "fit failed: " << e.what() << "\n";
        return 4;
    }
    const auto ev = fits.motor.form_eigenvalues();
    std::ostringstream body;
    body << "motor_quadratic p00 " << fmt(fits.motor.p00) << " p10 " << fmt(fits.motor.p10)
         << " p01 " << fmt(fits.motor.p01) << " p11 " << fmt(fits.motor.p11) << " p20 "
         << fmt(fits.motor.p20) << " p02 " << fmt(fits.motor.p02) << "\n";
    body << "motor_form_eigenvalues " << fmt(ev(0)) << " " << fmt(ev(1)) << "\n";
    body << "motor_convex " << (fits.motor.is_convex() ? "yes" : "no") << "\n";
    body << "motor_max_rel_err " << fmt(fits.motor_stats.max_rel_err) << " mean "
         << fmt(fits.motor_stats.mean_rel_err) << "\n";
    body << "fuelcell_linear p0 " << fmt(fits.fuelcell.p0) << " p1 " << fmt(fits.fuelcell.p1)
         << "\n";
    body << "fuelcell_max_rel_err " << fmt(fits.fuelcell_stats.max_rel_err) << " mean "
         << fmt(fits.fuelcell_stats.mean_rel_err) << "\n";
    body << "soc_quadratic alpha " << fmt(fits.soc.alpha) << " beta " << fmt(fits.soc.beta)
         << "\n";
    body << "soc_max_rel_err " << fmt(fits.soc_stats.max_rel_err) << " mean "
         << fmt(fits.soc_stats.mean_rel_err) << "\n";
    write_text(out_path, cfg.config_hash, body.str());
    std::cout << body.str();
    std::cout << "convexity certificate: "
              << (fits.motor.is_convex() && fits.soc.alpha > 0 ? "pass" : "FAIL") << "\n";
    return fits.motor.is_convex() && fits.soc.alpha > 0 ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"minimum-hydrogen speed and energy management trajectories for fuel cell "
                 "hybrid trains"};
    app.require_subcommand(1);

    std::string config_path, out_override, pipeline_override;
    double ds_override = -1, tau_override = -1, tol_override = -1;

    auto* opt = app.add_subcommand("optimize", "build, solve, simulate, and compare");
    opt->add_option("--config", config_path, "run configuration JSON")->required();
    opt->add_option("--pipeline", pipeline_override, "concurrent | sequential | both");
    opt->add_option("--out", out_override, "output directory");
    opt->add_option("--ds", ds_override, "spatial sampling interval override [m]");
    opt->add_option("--tau", tau_override, "target journey time override [s]");
    opt->add_option("--tolerance", tol_override, "tightness threshold override");

    auto* fit = app.add_subcommand("fit", "fit the convex surrogates and report residuals");
    fit->add_option("--config", config_path, "run configuration JSON")->required();
    std::string fit_out = "fits.txt";
    fit->add_option("--out", fit_out, "coefficients output file");

    auto* gen = app.add_subcommand("gen-route", "generate a synthetic route CSV pair");
    double g_length = 10000;
    int g_stops = 3;
    std::uint64_t g_seed = 7;
    double g_dwell = 45;
    std::string g_route = "route.csv", g_stations = "stations.csv";
    gen->add_option("--length", g_length, "route length [m]");
    gen->add_option("--stops", g_stops, "number of stops including termini");
    gen->add_option("--seed", g_seed, "random seed");
    gen->add_option("--dwell", g_dwell, "dwell at intermediate stations [s]");
    gen->add_option("--out-route", g_route, "route CSV path");
    gen->add_option("--out-stations", g_stations, "stations CSV path");

    auto* gp = app.add_subcommand("gen-params", "write the default parameter and map files");
    std::string p_dir = "data";
    gp->add_option("--dir", p_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            RouteGenOptions go;
            go.length_m = g_length;
            go.stops = g_stops;
            go.seed = g_seed;
            go.dwell_s = g_dwell;
            RouteProfile route = generate_route(go);
            write_route_csv(route, g_route, g_stations);
            std::cout << "wrote " << g_route << " and " << g_stations << "\n";
            std::cout << "suggested_tau_s " << fmt(route.target_time_s) << "\n";
            return 0;
        }
        if (gp->parsed()) {
            fs::create_directories(p_dir);
            TrainParams params;
            BatteryParams batt;
            write_params_json(p_dir + "/params.json", params, batt);
            write_motor_map_csv(p_dir + "/motor_map.csv", default_motor_map(params));
            write_fuelcell_map_csv(p_dir + "/fuelcell_map.csv", default_fuelcell_map(params));
            std::cout << "wrote default params and maps under " << p_dir << "\n";
            return 0;
        }
        RunConfig cfg = load_run_config(config_path);
        if (!pipeline_override.empty()) cfg.pipeline = pipeline_override;
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (ds_override > 0) cfg.ds_nominal_m = ds_override;
        if (tau_override > 0) cfg.tau_s = tau_override;
        if (tol_override > 0) cfg.tightness_threshold = tol_override;
        if (opt->parsed()) return cmd_optimize(cfg);
        if (fit->parsed()) return cmd_fit(cfg, fit_out);
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
