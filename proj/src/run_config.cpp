#include "hytrain/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace hytrain {

namespace {

using nlohmann::json;

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json parse_file(const std::string& path, std::string* raw = nullptr) {
    const std::string text = slurp(path);
    if (raw) *raw = text;
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

double get_num(const json& j, const std::string& key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig load_run_config(const std::string& path) {
    std::string raw;
    json j = parse_file(path, &raw);
    RunConfig cfg;
    cfg.config_hash = fnv1a_hex(raw);

    auto get_str = [&](const char* key, std::string* dst) {
        if (j.contains(key)) *dst = j.at(key).get<std::string>();
    };
    get_str("route", &cfg.route_csv);
    get_str("stations", &cfg.stations_csv);
    get_str("params", &cfg.params_json);
    get_str("motor_map", &cfg.motor_map_csv);
    get_str("fuelcell_map", &cfg.fuelcell_map_csv);
    get_str("pipeline", &cfg.pipeline);
    get_str("out_dir", &cfg.out_dir);
    cfg.ds_nominal_m = get_num(j, "ds_nominal", cfg.ds_nominal_m);
    cfg.z_stop = get_num(j, "z_stop", cfg.z_stop);
    cfg.dwell_samples = static_cast<int>(get_num(j, "dwell_samples", cfg.dwell_samples));
    cfg.tau_s = get_num(j, "tau", cfg.tau_s);
    cfg.tightness_threshold = get_num(j, "tightness_threshold", cfg.tightness_threshold);
    cfg.w_gamma = get_num(j, "w_gamma", cfg.w_gamma);
    cfg.w_omega = get_num(j, "w_omega", cfg.w_omega);
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        cfg.solver.eps_feas = get_num(s, "eps_feas", cfg.solver.eps_feas);
        cfg.solver.eps_gap = get_num(s, "eps_gap", cfg.solver.eps_gap);
        cfg.solver.max_newton = static_cast<int>(get_num(s, "max_newton", cfg.solver.max_newton));
        cfg.solver.mu = get_num(s, "mu", cfg.solver.mu);
        cfg.solver.t_init = get_num(s, "t_init", cfg.solver.t_init);
        cfg.solver.kkt_reg = get_num(s, "kkt_reg", cfg.solver.kkt_reg);
    }
    if (cfg.route_csv.empty()) throw std::runtime_error(path + ": missing 'route' entry");
    if (cfg.params_json.empty()) throw std::runtime_error(path + ": missing 'params' entry");
    return cfg;
}

void load_params_json(const std::string& path, TrainParams* params, BatteryParams* batt) {
    json j = parse_file(path);
    TrainParams p;
    BatteryParams b;
    if (j.contains("vehicle")) {
        const json& v = j.at("vehicle");
        p.mass_kg = get_num(v, "mass_kg", p.mass_kg);
        p.rotating_mass_frac = get_num(v, "rotating_mass_frac", p.rotating_mass_frac);
        p.davis_a_n = get_num(v, "davis_a_n", p.davis_a_n);
        p.davis_b_kg_per_s = get_num(v, "davis_b_kg_per_s", p.davis_b_kg_per_s);
        p.davis_c_kg_per_m = get_num(v, "davis_c_kg_per_m", p.davis_c_kg_per_m);
        p.gravity_mps2 = get_num(v, "gravity_mps2", p.gravity_mps2);
        p.aux_power_w = get_num(v, "aux_power_w", p.aux_power_w);
        p.brake_force_min_n = get_num(v, "brake_force_min_n", p.brake_force_min_n);
    }
    if (j.contains("motor")) {
        const json& mj = j.at("motor");
        p.motor_force_min_n = get_num(mj, "force_min_n", p.motor_force_min_n);
        p.motor_force_max_n = get_num(mj, "force_max_n", p.motor_force_max_n);
        p.motor_power_min_w = get_num(mj, "power_min_w", p.motor_power_min_w);
        p.motor_power_max_w = get_num(mj, "power_max_w", p.motor_power_max_w);
    }
    if (j.contains("battery")) {
        const json& bj = j.at("battery");
        p.battery_power_min_w = get_num(bj, "power_min_w", p.battery_power_min_w);
        p.battery_power_max_w = get_num(bj, "power_max_w", p.battery_power_max_w);
        b.open_circuit_voltage_v = get_num(bj, "open_circuit_voltage_v", b.open_circuit_voltage_v);
        b.internal_resistance_ohm = get_num(bj, "internal_resistance_ohm", b.internal_resistance_ohm);
        b.capacity_wh = get_num(bj, "capacity_kwh", b.capacity_wh / 1000.0) * 1000.0;
        b.soc_min_pct = get_num(bj, "soc_min_pct", b.soc_min_pct);
        b.soc_max_pct = get_num(bj, "soc_max_pct", b.soc_max_pct);
        b.soc_init_pct = get_num(bj, "soc_init_pct", b.soc_init_pct);
    }
    if (j.contains("fuel_cell")) {
        const json& f = j.at("fuel_cell");
        p.fuelcell_stacks = static_cast<int>(get_num(f, "stacks", p.fuelcell_stacks));
        p.fuelcell_power_min_w = get_num(f, "power_min_w", p.fuelcell_power_min_w);
        p.fuelcell_power_max_w = get_num(f, "power_max_w", p.fuelcell_power_max_w);
    }
    p.validate();
    b.validate(std::max(std::abs(p.battery_power_min_w), p.battery_power_max_w));
    *params = p;
    *batt = b;
}

void write_params_json(const std::string& path, const TrainParams& p, const BatteryParams& b) {
    json j;
    j["vehicle"] = {{"mass_kg", p.mass_kg},
                    {"rotating_mass_frac", p.rotating_mass_frac},
                    {"davis_a_n", p.davis_a_n},
                    {"davis_b_kg_per_s", p.davis_b_kg_per_s},
                    {"davis_c_kg_per_m", p.davis_c_kg_per_m},
                    {"gravity_mps2", p.gravity_mps2},
                    {"aux_power_w", p.aux_power_w},
                    {"brake_force_min_n", p.brake_force_min_n}};
    j["motor"] = {{"force_min_n", p.motor_force_min_n},
                  {"force_max_n", p.motor_force_max_n},
                  {"power_min_w", p.motor_power_min_w},
                  {"power_max_w", p.motor_power_max_w}};
    j["battery"] = {{"power_min_w", p.battery_power_min_w},
                    {"power_max_w", p.battery_power_max_w},
                    {"open_circuit_voltage_v", b.open_circuit_voltage_v},
                    {"internal_resistance_ohm", b.internal_resistance_ohm},
                    {"capacity_kwh", b.capacity_wh / 1000.0},
                    {"soc_min_pct", b.soc_min_pct},
                    {"soc_max_pct", b.soc_max_pct},
                    {"soc_init_pct", b.soc_init_pct}};
    j["fuel_cell"] = {{"stacks", p.fuelcell_stacks},
                      {"power_min_w", p.fuelcell_power_min_w},
                      {"power_max_w", p.fuelcell_power_max_w}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

MotorMap load_motor_map_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line.rfind("force_n,speed_mps,eta", 0) != 0)
        throw std::runtime_error(path + ": expected header force_n,speed_mps,eta");
    std::vector<double> fs, vs, es;
    double f, v, e;
    char c1, c2;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        if (!(ss >> f >> c1 >> v >> c2 >> e))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad row");
        fs.push_back(f);
        vs.push_back(v);
        es.push_back(e);
    }
    MotorMap map;
    for (double x : fs)
        if (map.force_grid_n.empty() || x > map.force_grid_n.back()) map.force_grid_n.push_back(x);
    for (size_t i = 0; i < vs.size() && vs[i] > (i ? vs[i - 1] : -1e300); ++i)
        map.speed_grid_mps.push_back(vs[i]);
    const size_t nf = map.force_grid_n.size(), nv = map.speed_grid_mps.size();
    if (nf * nv != es.size())
        throw std::runtime_error(path + ": rows do not form a dense force x speed grid");
    map.eta.resize(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(nv));
    for (size_t i = 0; i < nf; ++i)
        for (size_t j = 0; j < nv; ++j)
            map.eta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = es[i * nv + j];
    map.validate();
    return map;
}

FuelCellMap load_fuelcell_map_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line.rfind("power_w,eta", 0) != 0)
        throw std::runtime_error(path + ": expected header power_w,eta");
    FuelCellMap map;
    double p, e;
    char c1;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        if (!(ss >> p >> c1 >> e))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad row");
        map.power_grid_w.push_back(p);
        map.eta.push_back(e);
    }
    map.validate();
    return map;
}

void write_motor_map_csv(const std::string& path, const MotorMap& map) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "force_n,speed_mps,eta\n";
    for (size_t i = 0; i < map.force_grid_n.size(); ++i)
        for (size_t j = 0; j < map.speed_grid_mps.size(); ++j)
            out << fmt(map.force_grid_n[i]) << "," << fmt(map.speed_grid_mps[j]) << ","
                << fmt(map.eta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) << "\n";
}

void write_fuelcell_map_csv(const std::string& path, const FuelCellMap& map) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "power_w,eta\n";
    for (size_t i = 0; i < map.power_grid_w.size(); ++i)
        out << fmt(map.power_grid_w[i]) << "," << fmt(map.eta[i]) << "\n";
}

}  // namespace hytrain
