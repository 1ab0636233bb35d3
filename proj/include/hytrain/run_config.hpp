#pragma once

#include <string>

#include "hytrain/powertrain.hpp"
#include "hytrain/solver.hpp"

namespace hytrain {

// Everything one optimization run needs, loaded from a JSON config file.
struct RunConfig {
    std::string route_csv;
    std::string stations_csv;
    std::string params_json;
    std::string motor_map_csv;
    std::string fuelcell_map_csv;

    double ds_nominal_m = 10.0;
    double z_stop = 0.01;
    int dwell_samples = 5;
    double tau_s = -1;  // <= 0: use suggest_tau on the loaded route

    std::string pipeline = "both";  // concurrent | sequential | both
    std::string out_dir = "out";
    double tightness_threshold = 1e-3;
    double w_gamma = 1.0;
    double w_omega = 1.0;
    SolverSettings solver;

    std::string config_hash;  // FNV-1a of the config file bytes
};

RunConfig load_run_config(const std::string& path);

// Physical parameters from the nested JSON sections vehicle / motor /
// battery / fuel_cell (Table-style names).
void load_params_json(const std::string& path, TrainParams* params, BatteryParams* batt);
void write_params_json(const std::string& path, const TrainParams& params,
                       const BatteryParams& batt);

MotorMap load_motor_map_csv(const std::string& path);
FuelCellMap load_fuelcell_map_csv(const std::string& path);
void write_motor_map_csv(const std::string& path, const MotorMap& map);
void write_fuelcell_map_csv(const std::string& path, const FuelCellMap& map);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace hytrain
