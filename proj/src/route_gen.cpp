#include "hytrain/route_gen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>
#include <vector>

namespace hytrain {

namespace {

// mt19937_64 output mapped to [0,1); avoids distribution implementation drift
struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    double uniform() {
        return static_cast<double>(gen() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

}  // namespace

RouteProfile generate_route(const RouteGenOptions& opts) {
    if (!(opts.length_m > 0)) throw std::invalid_argument("route length must be positive");
    if (opts.stops < 2) throw std::invalid_argument("need at least two stops (the termini)");
    Rng rng(opts.seed);
    const double L = opts.length_m;

    // Elevation: one long sine plus gaussian features every ~2 km on average.
    struct Bump {
        double amp, center, sigma;
    };
    std::vector<Bump> bumps;
    const int n_bumps = std::max(2, static_cast<int>(L / 2000.0));
    for (int i = 0; i < n_bumps; ++i) {
        Bump b;
        b.amp = rng.uniform(-10.0, 10.0);
        b.center = rng.uniform(0.05 * L, 0.95 * L);
        b.sigma = rng.uniform(250.0, 900.0);
        bumps.push_back(b);
    }
    const double sine_amp = rng.uniform(4.0, 9.0);
    const double sine_wavelength = rng.uniform(0.25 * L, 0.6 * L);
    const double sine_phase = rng.uniform(0.0, 2.0 * M_PI);

    auto slope = [&](double s) {
        double d = sine_amp * (2.0 * M_PI / sine_wavelength) *
                   std::cos(2.0 * M_PI * s / sine_wavelength + sine_phase);
        for (const auto& b : bumps)
            d += b.amp * std::exp(-0.5 * (s - b.center) * (s - b.center) / (b.sigma * b.sigma)) *
                 (-(s - b.center) / (b.sigma * b.sigma));
        return d;
    };

    // Speed limit zones: base limit with a few slower stretches.
    struct Zone {
        double start, end, limit;
    };
    std::vector<Zone> zones;
    const int n_zones = 2 + static_cast<int>(rng.uniform() * 3.0);
    for (int i = 0; i < n_zones; ++i) {
        const double c = rng.uniform(0.1 * L, 0.9 * L);
        const double half = rng.uniform(0.02 * L, 0.06 * L);
        zones.push_back({std::max(0.0, c - half), std::min(L, c + half),
                         rng.uniform(0.6, 0.85) * opts.base_limit_mps});
    }
    auto limit_at = [&](double s) {
        double lim = opts.base_limit_mps;
        for (const auto& z : zones)
            if (s >= z.start && s < z.end) lim = std::min(lim, z.limit);
        return lim;
    };

    RouteProfile route;
    route.total_length_m = L;
    const int n_bp = std::max(2, static_cast<int>(std::llround(L / opts.breakpoint_spacing_m)));
    const double step = L / n_bp;
    for (int i = 0; i < n_bp; ++i) {
        const double s = i * step;
        const double theta = std::clamp(std::atan(slope(s + 0.5 * step)), -opts.max_gradient_rad,
                                        opts.max_gradient_rad);
        route.gradient_points.push_back({s, theta});
        route.speed_limits.push_back({s, s + step, limit_at(s + 0.5 * step)});
    }
    route.speed_limits.back().end_m = L;

    // Stations: evenly spaced with jitter; termini carry no dwell.
    const double spacing = L / (opts.stops - 1);
    for (int i = 0; i < opts.stops; ++i) {
        double pos = i * spacing;
        if (i > 0 && i + 1 < opts.stops) pos += rng.uniform(-0.12, 0.12) * spacing;
        const bool terminus = (i == 0 || i + 1 == opts.stops);
        route.stations.push_back({std::clamp(pos, 0.0, L), terminus ? 0.0 : opts.dwell_s});
    }

    route.target_time_s = suggest_tau(route, opts.tau_slack);
    route.validate();
    return route;
}

void write_route_csv(const RouteProfile& route, const std::string& route_csv_path,
                     const std::string& stations_csv_path) {
    std::ofstream rf(route_csv_path);
    if (!rf) throw std::runtime_error("cannot write " + route_csv_path);
    rf << "position_m,gradient_rad,speed_limit_mps\n";
    for (size_t i = 0; i < route.gradient_points.size(); ++i) {
        rf << fmt(route.gradient_points[i].position_m) << ","
           << fmt(route.gradient_points[i].angle_rad) << ","
           << fmt(route.speed_limits[i].limit_mps) << "\n";
    }
    // closing breakpoint at the route end
    rf << fmt(route.total_length_m) << "," << fmt(route.gradient_points.back().angle_rad) << ","
       << fmt(route.speed_limits.back().limit_mps) << "\n";

    std::ofstream sf(stations_csv_path);
    if (!sf) throw std::runtime_error("cannot write " + stations_csv_path);
    sf << "position_m,dwell_s\n";
    for (const auto& st : route.stations)
        sf << fmt(st.position_m) << "," << fmt(st.dwell_s) << "\n";
}

}  // namespace hytrain
