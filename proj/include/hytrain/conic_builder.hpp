#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hytrain/conic_program.hpp"
#include "hytrain/powertrain.hpp"
#include "hytrain/route.hpp"

namespace hytrain {

// Thrown when a program is infeasible by construction (e.g. the target time
// is below the journey-time lower bound, or a fixed profile violates bounds).
struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BuilderOptions {
    double w_gamma = 1.0;  // weight on the inverse-speed quadratic cost term
    double w_omega = 1.0;  // weight on the auxiliary-variable quadratic cost term
    double tau_warn_margin = 0.01;
};

struct BuildDiagnostics {
    double time_lower_bound_s = 0;
    std::vector<std::string> warnings;
};

struct BuiltProgram {
    ConicProgram program;
    VariableMap map;
    BuildDiagnostics diagnostics;
};

// Concurrent speed + energy-management problem: all ten trajectory fields are
// decision variables; fuel plus the gamma/omega quadratic terms are minimized
// subject to dynamics, timing, charge sustaining, bounds, and the relaxed
// cones.
BuiltProgram build_concurrent(const SpatialGrid& grid, const TrainParams& params,
                              const BatteryParams& batt, const SurrogateFits& fits,
                              const BuilderOptions& opts = {});

// Speed-only step of the sequential benchmark: ideal powertrain, no battery or
// fuel cell knowledge; minimizes traction work plus the gamma quadratic term.
BuiltProgram build_speed_only(const SpatialGrid& grid, const TrainParams& params,
                              const BuilderOptions& opts = {});

// Speed profile handed to the energy-management step. Forces may be omitted;
// they are then reconstructed from the dynamics with a regeneration-first
// brake split. gamma may be omitted; it defaults to 1/v.
struct FixedProfile {
    std::vector<double> v;
    std::vector<double> z;
    std::vector<double> motor_force;
    std::vector<double> brake_force;
    std::vector<double> gamma;
};

// Energy-management step of the sequential benchmark: speed pinned, only the
// fuel cell / battery split and the SOC chain are optimized.
BuiltProgram build_ems_given_speed(const SpatialGrid& grid, const TrainParams& params,
                                   const BatteryParams& batt, const SurrogateFits& fits,
                                   const FixedProfile& profile, const BuilderOptions& opts = {});

// True when every constraint family expected for the given formulation has at
// least one row or cone in the program; missing families are reported.
bool audit_coverage(const ConicProgram& program, std::vector<std::string>* missing = nullptr);

}  // namespace hytrain
