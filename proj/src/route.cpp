#include "hytrain/route.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hytrain {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string seg_str(const SpeedLimitSegment& s) {
    std::ostringstream os;
    os << "[" << s.start_m << ", " << s.end_m << "]";
    return os.str();
}

}  // namespace

void RouteProfile::validate() const {
    if (!(total_length_m > 0)) fail("route length must be positive");
    if (gradient_points.empty()) fail("route needs at least one gradient point");
    for (size_t i = 1; i < gradient_points.size(); ++i)
        if (gradient_points[i].position_m <= gradient_points[i - 1].position_m)
            fail("gradient points must have strictly increasing positions");

    if (speed_limits.empty()) fail("route needs at least one speed limit segment");
    double cursor = 0;
    for (size_t i = 0; i < speed_limits.size(); ++i) {
        const auto& s = speed_limits[i];
        if (!(s.limit_mps > 0)) fail("speed limit must be positive in segment " + seg_str(s));
        if (!(s.end_m > s.start_m)) fail("empty speed limit segment " + seg_str(s));
        if (s.start_m < cursor - 1e-9)
            fail("speed limit segments " + seg_str(speed_limits[i - 1]) + " and " + seg_str(s) +
                 " overlap");
        if (s.start_m > cursor + 1e-9)
            fail("speed limit gap before segment " + seg_str(s));
        cursor = s.end_m;
    }
    if (std::abs(cursor - total_length_m) > 1e-9)
        fail("speed limit segments do not cover the full route length");

    double prev = -1;
    for (const auto& st : stations) {
        if (st.position_m < 0 || st.position_m > total_length_m)
            fail("station position outside the route");
        if (st.position_m <= prev) fail("station positions must be strictly increasing");
        if (st.dwell_s < 0) fail("station dwell must be nonnegative");
        prev = st.position_m;
    }
}

double RouteProfile::gradient_at(double position_m) const {
    // piecewise constant from the last breakpoint at or before the position
    double angle = gradient_points.front().angle_rad;
    for (const auto& g : gradient_points) {
        if (g.position_m <= position_m) angle = g.angle_rad;
        else break;
    }
    return angle;
}

double RouteProfile::speed_limit_at(double position_m) const {
    for (const auto& s : speed_limits)
        if (position_m >= s.start_m && position_m < s.end_m) return s.limit_mps;
    return speed_limits.back().limit_mps;
}

size_t SpatialGrid::driving_sample_count() const {
    size_t n = 0;
    for (size_t k = 0; k < num_intervals(); ++k)
        if (!dwell_interval[k]) ++n;
    return n;
}

double SpatialGrid::driving_length_m() const {
    double len = 0;
    for (size_t k = 0; k < num_intervals(); ++k)
        if (!dwell_interval[k]) len += ds_m[k];
    return len;
}

double SpatialGrid::time_lower_bound_s() const {
    double t = 0;
    for (size_t k = 0; k < num_intervals(); ++k)
        t += ds_m[k] / v_max_mps[k];
    return t;
}

void SpatialGrid::validate() const {
    if (num_samples() < 2 || num_intervals() + 1 != num_samples())
        fail("grid must have one more sample than intervals");
    if (!(z_stop > 0)) fail("z_stop must be positive");
    for (double d : ds_m)
        if (!(d > 0)) fail("all interval lengths must be positive");
    for (size_t i = 0; i < num_samples(); ++i) {
        if (!(v_max_mps[i] > 0)) fail("sample speed bound must be positive");
        if (v_min_mps[i] < 0 || v_min_mps[i] > v_max_mps[i]) fail("sample speed bounds out of order");
        if (z_max[i] < z_min[i]) fail("sample z bounds out of order");
    }
}

namespace {

struct CsvRow {
    std::vector<double> fields;
    int line = 0;
};

std::vector<CsvRow> read_csv(const std::string& path, const std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    int lineno = 0;
    bool header_seen = false;
    std::vector<CsvRow> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!header_seen) {
            if (cells.size() != header.size())
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": expected header with " + std::to_string(header.size()) +
                                         " columns");
            for (size_t i = 0; i < header.size(); ++i)
                if (cells[i] != header[i])
                    throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                             ": expected column '" + header[i] + "', got '" +
                                             cells[i] + "'");
            header_seen = true;
            continue;
        }
        CsvRow row;
        row.line = lineno;
        for (const auto& c : cells) {
            try {
                size_t pos = 0;
                row.fields.push_back(std::stod(c, &pos));
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": cannot parse number '" + c + "'");
            }
        }
        if (row.fields.size() != header.size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected " + std::to_string(header.size()) + " fields");
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

RouteProfile load_route(const std::string& route_csv_path,
                        const std::string& stations_csv_path, double target_time_s) {
    RouteProfile route;
    route.target_time_s = target_time_s;

    const auto rows = read_csv(route_csv_path, {"position_m", "gradient_rad", "speed_limit_mps"});
    if (rows.size() < 2)
        throw std::runtime_error(route_csv_path + ": need at least two breakpoints");
    route.total_length_m = rows.back().fields[0];
    for (size_t i = 0; i + 1 < rows.size(); ++i) {
        route.gradient_points.push_back({rows[i].fields[0], rows[i].fields[1]});
        route.speed_limits.push_back({rows[i].fields[0], rows[i + 1].fields[0], rows[i].fields[2]});
    }

    if (!stations_csv_path.empty()) {
        for (const auto& r : read_csv(stations_csv_path, {"position_m", "dwell_s"}))
            route.stations.push_back({r.fields[0], r.fields[1]});
    }

    route.validate();
    return route;
}

SpatialGrid discretize(const RouteProfile& route, const DiscretizeOptions& opts) {
    route.validate();
    if (!(opts.ds_nominal_m > 0)) fail("ds_nominal must be positive");
    if (!(opts.z_stop > 0)) fail("z_stop must be positive");
    if (opts.dwell_samples_per_stop < 1) fail("need at least one dwell sample per stop");

    SpatialGrid grid;
    grid.z_stop = opts.z_stop;
    grid.target_time_s = route.target_time_s;
    const double v_stop = std::sqrt(opts.z_stop);

    // Build interval list: driving intervals of ~ds_nominal between consecutive
    // stop positions, with dwell intervals inserted at each positive-dwell stop.
    struct Interval {
        double ds;
        double mid_pos;  // route position used to sample gradient / limits
        bool dwell;
    };
    std::vector<Interval> intervals;
    std::vector<double> sample_pos;  // route position per sample
    sample_pos.push_back(0.0);

    auto add_driving = [&](double from, double to) {
        const double len = to - from;
        if (len <= 1e-9) return;
        // floor keeps refinement monotone: halving ds_nominal at least doubles
        // the interval count
        const int n = std::max(1, static_cast<int>(len / opts.ds_nominal_m + 1e-9));
        const double ds = len / n;
        for (int k = 0; k < n; ++k) {
            intervals.push_back({ds, from + (k + 0.5) * ds, false});
            sample_pos.push_back(from + (k + 1) * ds);
        }
    };
    auto add_dwell = [&](const Station& st) {
        if (st.dwell_s <= 0) return;
        const int m = opts.dwell_samples_per_stop;
        const double ds = v_stop * st.dwell_s / m;
        for (int k = 0; k < m; ++k) {
            intervals.push_back({ds, st.position_m, true});
            sample_pos.push_back(st.position_m);
        }
    };

    double cursor = 0;
    for (const auto& st : route.stations) {
        add_driving(cursor, st.position_m);
        add_dwell(st);
        cursor = std::max(cursor, st.position_m);
    }
    add_driving(cursor, route.total_length_m);

    const size_t n_int = intervals.size();
    const size_t n_smp = n_int + 1;
    grid.ds_m.resize(n_int);
    grid.gradient_rad.resize(n_int);
    grid.dwell_interval.resize(n_int);
    for (size_t k = 0; k < n_int; ++k) {
        grid.ds_m[k] = intervals[k].ds;
        grid.gradient_rad[k] = intervals[k].dwell ? 0.0 : route.gradient_at(intervals[k].mid_pos);
        grid.dwell_interval[k] = intervals[k].dwell;
    }

    grid.position_m = sample_pos;
    grid.v_max_mps.resize(n_smp);
    grid.v_min_mps.assign(n_smp, 0.0);
    grid.z_max.resize(n_smp);
    grid.z_min.resize(n_smp);
    grid.dwell_sample.assign(n_smp, false);

    // A sample is pinned to z_stop when it starts a dwell interval, plus both
    // termini (start and end at rest). The sample after the final dwell
    // interval of a stop stays free, so the train may pick up speed inside the
    // last creep interval instead of being charged a full driving interval at
    // crawl speed on departure.
    for (size_t k = 0; k < n_int; ++k)
        if (grid.dwell_interval[k]) grid.dwell_sample[k] = true;
    grid.dwell_sample[0] = true;
    grid.dwell_sample[n_smp - 1] = true;

    // Speed bound per sample: lower of the two adjacent driving-interval
    // limits, so a limit drop is already respected at its boundary sample.
    auto interval_limit = [&](size_t k) {
        return intervals[k].dwell ? 1e30 : route.speed_limit_at(intervals[k].mid_pos);
    };
    for (size_t i = 0; i < n_smp; ++i) {
        double lim = 1e30;
        if (i > 0) lim = std::min(lim, interval_limit(i - 1));
        if (i < n_int) lim = std::min(lim, interval_limit(i));
        if (grid.dwell_sample[i]) lim = v_stop;
        if (lim >= 1e30) lim = v_stop;  // isolated sample between dwell intervals
        grid.v_max_mps[i] = lim;
        grid.z_max[i] = lim * lim;
        grid.z_min[i] = std::max(grid.v_min_mps[i] * grid.v_min_mps[i], opts.z_stop);
    }

    grid.validate();
    return grid;
}

double suggest_tau(const RouteProfile& route, double slack_factor) {
    // The grid's own lower bound already accounts for dwell creep and the
    // crawl-speed charge on the first interval, so base the suggestion on it.
    RouteProfile copy = route;
    copy.target_time_s = 1.0;
    const SpatialGrid grid = discretize(copy, DiscretizeOptions{});
    size_t accel_events = 1;
    for (const auto& st : route.stations)
        if (st.position_m > 0 && st.position_m < route.total_length_m) ++accel_events;
    return slack_factor * (grid.time_lower_bound_s() + 30.0 * static_cast<double>(accel_events));
}

}  // namespace hytrain
