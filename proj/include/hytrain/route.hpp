#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hytrain {

struct GradientPoint {
    double position_m = 0;
    double angle_rad = 0;  // track angle theta; resistance uses m g sin(theta)
};

struct SpeedLimitSegment {
    double start_m = 0;
    double end_m = 0;
    double limit_mps = 0;
};

struct Station {
    double position_m = 0;
    double dwell_s = 0;
};

// Continuous description of a route: piecewise-constant gradient and speed
// limits plus scheduled station stops and the target journey time.
struct RouteProfile {
    double total_length_m = 0;
    std::vector<GradientPoint> gradient_points;      // sorted by position
    std::vector<SpeedLimitSegment> speed_limits;     // cover [0, total_length]
    std::vector<Station> stations;                   // strictly increasing positions
    double target_time_s = 0;                        // tau

    // Throws std::invalid_argument naming the offending segment/station when
    // coverage, overlap, or ordering invariants fail.
    void validate() const;

    double gradient_at(double position_m) const;
    double speed_limit_at(double position_m) const;
};

// Discrete spatial grid. Sample i carries the state bounds; interval i (from
// sample i to i+1, i < num_samples()-1) carries the length, gradient, and the
// dwell flag. Dwell intervals have their external force zeroed and their
// length chosen so that creeping at sqrt(z_stop) consumes the scheduled dwell
// time exactly.
struct SpatialGrid {
    // per interval (size num_samples()-1)
    std::vector<double> ds_m;
    std::vector<double> gradient_rad;
    std::vector<bool> dwell_interval;  // == external force zeroed

    // per sample
    std::vector<double> position_m;    // route position (dwell creep does not advance it)
    std::vector<double> v_max_mps;
    std::vector<double> v_min_mps;
    std::vector<double> z_max;         // v_max^2
    std::vector<double> z_min;         // max(v_min^2, z_stop)
    std::vector<bool> dwell_sample;    // z pinned to z_stop here

    double z_stop = 0.01;
    double target_time_s = 0;

    size_t num_samples() const { return position_m.size(); }
    size_t num_intervals() const { return ds_m.size(); }
    size_t driving_sample_count() const;

    // Sum of ds over non-dwell intervals (should equal the route length).
    double driving_length_m() const;

    // Weak journey-time lower bound: sum of ds / v_max over all intervals.
    double time_lower_bound_s() const;

    void validate() const;
};

struct DiscretizeOptions {
    double ds_nominal_m = 10.0;
    double z_stop = 0.01;
    int dwell_samples_per_stop = 5;
};

// Load a route from the breakpoint CSV (position_m,gradient_rad,speed_limit_mps)
// and a station CSV (position_m,dwell_s). tau is carried in the run
// configuration, not the CSVs. Throws std::runtime_error with the file name
// and line number on parse errors.
RouteProfile load_route(const std::string& route_csv_path,
                        const std::string& stations_csv_path, double target_time_s);

// Discretize the route onto the spatial grid used by the optimizer. Gradient
// and speed limits are sampled at interval midpoints; sample bounds use the
// lower of the two adjacent interval limits. Stations with positive dwell get
// dwell_samples_per_stop extra intervals of length sqrt(z_stop)*dwell/M each.
SpatialGrid discretize(const RouteProfile& route, const DiscretizeOptions& opts);

// Deterministic journey-time suggestion: slack * (sum ds/v_limit + per-stop
// acceleration allowance) + total dwell.
double suggest_tau(const RouteProfile& route, double slack_factor = 1.3);

}  // namespace hytrain
