#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "hytrain/route.hpp"
#include "hytrain/route_gen.hpp"

using namespace hytrain;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path("/tmp/hytrain_test_" + name) {
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_route: minimal flat route") {
    TempFile route("flat.csv",
                   "position_m,gradient_rad,speed_limit_mps\n"
                   "0,0,25\n"
                   "1000,0,25\n");
    TempFile stations("flat_st.csv",
                      "position_m,dwell_s\n"
                      "0,0\n"
                      "1000,0\n");
    RouteProfile r = load_route(route.path, stations.path, 120.0);
    CHECK(r.total_length_m == 1000.0);
    CHECK(r.gradient_points.size() == 1);
    CHECK(r.gradient_points[0].angle_rad == 0.0);
    CHECK(r.speed_limits.size() == 1);
    CHECK(r.speed_limit_at(500.0) == 25.0);
    CHECK(r.stations.size() == 2);
    CHECK(r.target_time_s == 120.0);
}

TEST_CASE("load_route: parse errors carry file and line") {
    TempFile bad("bad.csv",
                 "position_m,gradient_rad,speed_limit_mps\n"
                 "0,0,25\n"
                 "oops,0,25\n");
    try {
        load_route(bad.path, "", 100.0);
        FAIL("expected parse error");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find(":3") != std::string::npos);
        CHECK(msg.find("oops") != std::string::npos);
    }
}

TEST_CASE("overlapping speed limit segments are rejected by name") {
    RouteProfile r;
    r.total_length_m = 1000;
    r.gradient_points = {{0, 0}};
    r.speed_limits = {{0, 500, 25}, {400, 1000, 20}};
    r.stations = {{0, 0}, {1000, 0}};
    try {
        r.validate();
        FAIL("expected overlap error");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("overlap") != std::string::npos);
        CHECK(msg.find("400") != std::string::npos);
    }
    SUBCASE("gaps are rejected too") {
        r.speed_limits = {{0, 300, 25}, {400, 1000, 20}};
        CHECK_THROWS_WITH_AS(r.validate(), doctest::Contains("gap"), std::invalid_argument);
    }
}

TEST_CASE("paper-scale route profile validates") {
    RouteProfile r;
    r.total_length_m = 63000;
    r.gradient_points = {{0, 0.001}};
    r.speed_limits = {{0, 63000, 25}};
    for (int i = 0; i < 18; ++i) {
        const double pos = 63000.0 * i / 17.0;
        const bool terminus = (i == 0 || i == 17);
        r.stations.push_back({pos, terminus ? 0.0 : 45.0});
    }
    r.target_time_s = 5220.0;  // 87 minutes
    CHECK_NOTHROW(r.validate());
    CHECK(r.stations.size() == 18);
}

TEST_CASE("discretize: sample counts") {
    SUBCASE("63 km at 10 m gives about 6300 driving samples") {
        RouteProfile r;
        r.total_length_m = 63000;
        r.gradient_points = {{0, 0}};
        r.speed_limits = {{0, 63000, 25}};
        r.stations = {{0, 0}, {63000, 0}};
        r.target_time_s = 5220;
        SpatialGrid g = discretize(r, {});
        CHECK(g.driving_sample_count() == 6300);
    }
    SUBCASE("100 m with no stations and ds=10 gives N=10 and no dwell") {
        RouteProfile r;
        r.total_length_m = 100;
        r.gradient_points = {{0, 0}};
        r.speed_limits = {{0, 100, 15}};
        r.target_time_s = 60;
        SpatialGrid g = discretize(r, {});
        CHECK(g.num_intervals() == 10);
        CHECK(g.driving_sample_count() == 10);
        for (size_t k = 0; k < g.num_intervals(); ++k) CHECK_FALSE(g.dwell_interval[k]);
    }
}

TEST_CASE("discretize: dwell sample construction") {
    RouteProfile r;
    r.total_length_m = 1000;
    r.gradient_points = {{0, 0.002}};
    r.speed_limits = {{0, 1000, 20}};
    r.stations = {{0, 0}, {500, 60}, {1000, 0}};
    r.target_time_s = 200;
    DiscretizeOptions opts;
    opts.z_stop = 0.01;
    opts.dwell_samples_per_stop = 5;
    SpatialGrid g = discretize(r, opts);

    SUBCASE("five dwell intervals of 1.2 m each") {
        int dwell_count = 0;
        for (size_t k = 0; k < g.num_intervals(); ++k)
            if (g.dwell_interval[k]) {
                ++dwell_count;
                CHECK(g.ds_m[k] == doctest::Approx(0.1 * 60.0 / 5.0));
                CHECK(g.gradient_rad[k] == 0.0);  // external force zeroed at dwell
            }
        CHECK(dwell_count == 5);
    }
    SUBCASE("dwell time identity is exact") {
        double t = 0;
        for (size_t k = 0; k < g.num_intervals(); ++k)
            if (g.dwell_interval[k]) t += g.ds_m[k] / std::sqrt(g.z_stop);
        CHECK(t == doctest::Approx(60.0).epsilon(1e-12));
    }
    SUBCASE("driving length equals the route length") {
        CHECK(g.driving_length_m() == doctest::Approx(1000.0).epsilon(1e-12));
    }
    SUBCASE("z bounds are consistent with v bounds") {
        for (size_t i = 0; i < g.num_samples(); ++i) {
            CHECK(g.z_max[i] == doctest::Approx(g.v_max_mps[i] * g.v_max_mps[i]));
            CHECK(g.z_min[i] >= opts.z_stop);
        }
    }
    SUBCASE("dwell intervals start at pinned samples; departure is free") {
        for (size_t k = 0; k < g.num_intervals(); ++k) {
            if (!g.dwell_interval[k]) continue;
            CHECK(g.dwell_sample[k]);
            // the sample after the last dwell interval may accelerate
            if (k + 1 < g.num_intervals() && !g.dwell_interval[k + 1])
                CHECK_FALSE(g.dwell_sample[k + 1]);
        }
    }
}

TEST_CASE("discretize: refinement at least doubles the driving sample count") {
    RouteProfile r;
    r.total_length_m = 987;  // not a multiple of ds
    r.gradient_points = {{0, 0}};
    r.speed_limits = {{0, 987, 18}};
    r.stations = {{0, 0}, {987, 0}};
    r.target_time_s = 100;
    DiscretizeOptions coarse, fine;
    coarse.ds_nominal_m = 10;
    fine.ds_nominal_m = 5;
    const auto gc = discretize(r, coarse);
    const auto gf = discretize(r, fine);
    CHECK(gf.driving_sample_count() >= 2 * gc.driving_sample_count());
    CHECK(gc.driving_length_m() == doctest::Approx(987.0));
    CHECK(gf.driving_length_m() == doctest::Approx(987.0));
}

TEST_CASE("discretize: limit drops apply at the boundary sample") {
    RouteProfile r;
    r.total_length_m = 200;
    r.gradient_points = {{0, 0}};
    r.speed_limits = {{0, 100, 25}, {100, 200, 15}};
    r.target_time_s = 60;
    SpatialGrid g = discretize(r, {});
    // the sample at 100 m sits between a 25 and a 15 interval: bound is 15
    bool found = false;
    for (size_t i = 0; i < g.num_samples(); ++i)
        if (std::abs(g.position_m[i] - 100.0) < 1e-9) {
            CHECK(g.v_max_mps[i] == doctest::Approx(15.0));
            found = true;
        }
    CHECK(found);
}

TEST_CASE("discretize rejects invalid options") {
    RouteProfile r;
    r.total_length_m = 100;
    r.gradient_points = {{0, 0}};
    r.speed_limits = {{0, 100, 15}};
    r.target_time_s = 60;
    DiscretizeOptions bad;
    bad.z_stop = 0.0;
    CHECK_THROWS_AS(discretize(r, bad), std::invalid_argument);
    bad = {};
    bad.dwell_samples_per_stop = 0;
    CHECK_THROWS_AS(discretize(r, bad), std::invalid_argument);
    RouteProfile neg = r;
    neg.stations = {{50, -1}};
    CHECK_THROWS_AS(discretize(neg, {}), std::invalid_argument);
}

TEST_CASE("generated routes are reproducible and well formed") {
    RouteGenOptions opts;
    opts.length_m = 8000;
    opts.stops = 3;
    opts.seed = 42;
    RouteProfile a = generate_route(opts);
    RouteProfile b = generate_route(opts);
    CHECK(a.gradient_points.size() == b.gradient_points.size());
    for (size_t i = 0; i < a.gradient_points.size(); ++i)
        CHECK(a.gradient_points[i].angle_rad == b.gradient_points[i].angle_rad);
    CHECK(a.target_time_s == b.target_time_s);
    CHECK_NOTHROW(a.validate());
    CHECK(a.stations.front().dwell_s == 0.0);
    CHECK(a.stations.back().dwell_s == 0.0);
    CHECK(a.stations[1].dwell_s > 0.0);

    SUBCASE("different seeds differ") {
        opts.seed = 43;
        RouteProfile c = generate_route(opts);
        bool any_diff = false;
        for (size_t i = 0; i < std::min(a.gradient_points.size(), c.gradient_points.size()); ++i)
            if (a.gradient_points[i].angle_rad != c.gradient_points[i].angle_rad) any_diff = true;
        CHECK(any_diff);
    }
    SUBCASE("stop count is validated") {
        opts.stops = 1;
        CHECK_THROWS_AS(generate_route(opts), std::invalid_argument);
    }
    SUBCASE("tau suggestion is above the limit-speed lower bound") {
        SpatialGrid g = discretize(a, {});
        CHECK(a.target_time_s > g.time_lower_bound_s());
    }
}
