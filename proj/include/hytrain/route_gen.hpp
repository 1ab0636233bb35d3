#pragma once

#include <cstdint>
#include <string>

#include "hytrain/route.hpp"

namespace hytrain {

struct RouteGenOptions {
    double length_m = 10000;
    int stops = 3;  // including both termini, >= 2
    std::uint64_t seed = 7;
    double dwell_s = 45;           // intermediate stations; termini get zero
    double base_limit_mps = 25;
    double breakpoint_spacing_m = 100;
    double max_gradient_rad = 0.025;
    double tau_slack = 1.3;        // journey-time suggestion factor
};

// Deterministic synthetic route: smooth elevation built from a long sine plus
// gaussian bumps and dips, a handful of reduced-speed zones, and evenly
// spaced stations with jitter. target_time_s is filled from suggest_tau.
RouteProfile generate_route(const RouteGenOptions& opts);

// Write the breakpoint and station CSVs for a profile.
void write_route_csv(const RouteProfile& route, const std::string& route_csv_path,
                     const std::string& stations_csv_path);

}  // namespace hytrain
