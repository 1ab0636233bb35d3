#include <doctest.h>

#include <cmath>
#include <random>

#include "hytrain/solver.hpp"

using namespace hytrain;

namespace {

// min x s.t. x >= 1, encoded as free x with a nonnegative slack: x - s = 1.
ConicProgram bound_lp() {
    ConicProgram p;
    p.num_vars = 2;
    p.free_count = 1;
    p.nonneg_count = 1;
    p.objective = Eigen::Vector2d(1.0, 0.0);
    p.eq_matrix.resize(1, 2);
    p.eq_matrix.insert(0, 0) = 1.0;
    p.eq_matrix.insert(0, 1) = -1.0;
    p.eq_rhs = Eigen::VectorXd::Constant(1, 1.0);
    p.row_tags = {ConstraintTag::kGeneric};
    p.nonneg_tags = {ConstraintTag::kGeneric};
    return p;
}

// min t s.t. ||(3,4)|| <= t: SOC block with the vector pinned by equalities.
ConicProgram norm_socp() {
    ConicProgram p;
    p.num_vars = 3;
    p.free_count = 0;
    p.nonneg_count = 0;
    p.soc_blocks = {{0, 3, ConstraintTag::kGeneric}};
    p.objective = Eigen::Vector3d(1.0, 0.0, 0.0);
    p.eq_matrix.resize(2, 3);
    p.eq_matrix.insert(0, 1) = 1.0;
    p.eq_matrix.insert(1, 2) = 1.0;
    p.eq_rhs = Eigen::Vector2d(3.0, 4.0);
    p.row_tags = {ConstraintTag::kGeneric, ConstraintTag::kGeneric};
    return p;
}

// min x+y s.t. x+y = 1, x,y >= 0: a whole face is optimal.
ConicProgram degenerate_lp() {
    ConicProgram p;
    p.num_vars = 2;
    p.free_count = 0;
    p.nonneg_count = 2;
    p.objective = Eigen::Vector2d(1.0, 1.0);
    p.eq_matrix.resize(1, 2);
    p.eq_matrix.insert(0, 0) = 1.0;
    p.eq_matrix.insert(0, 1) = 1.0;
    p.eq_rhs = Eigen::VectorXd::Constant(1, 1.0);
    p.row_tags = {ConstraintTag::kGeneric};
    p.nonneg_tags = {ConstraintTag::kGeneric, ConstraintTag::kGeneric};
    return p;
}

}  // namespace

TEST_CASE("1-D bound-constrained LP") {
    SolverResult res = solve(bound_lp());
    REQUIRE(res.status == SolveStatus::kOptimal);
    CHECK(res.primal(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.objective == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.residuals.rel_gap <= 1e-7);
    CHECK(res.residuals.primal_eq_rel <= 1e-7);
}

TEST_CASE("Euclidean norm epigraph") {
    SolverResult res = solve(norm_socp());
    REQUIRE(res.status == SolveStatus::kOptimal);
    CHECK(res.primal(0) == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(res.primal(1) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(res.primal(2) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("degenerate face: any primal on the segment is accepted") {
    SolverResult res = solve(degenerate_lp());
    REQUIRE(res.status == SolveStatus::kOptimal);
    CHECK(res.objective == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.primal(0) >= -1e-9);
    CHECK(res.primal(1) >= -1e-9);
    CHECK(res.primal(0) + res.primal(1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("kkt_residuals") {
    ConicProgram p = bound_lp();
    SolverResult res = solve(p);
    REQUIRE(res.status == SolveStatus::kOptimal);

    SUBCASE("the solver's duals satisfy the KKT system") {
        ResidualReport rep = kkt_residuals(p, res.primal, res.eq_duals, res.cone_duals);
        CHECK(rep.primal_eq_rel <= 1e-7);
        CHECK(rep.dual_stationarity <= 1e-6);
        CHECK(rep.rel_gap <= 1e-7);
        // agreement between the solver's internal report and the re-check
        CHECK(rep.primal_eq_inf == doctest::Approx(res.residuals.primal_eq_inf).epsilon(1e-10));
        CHECK(rep.duality_gap == doctest::Approx(res.residuals.duality_gap).epsilon(1e-10));
    }
    SUBCASE("perturbing one primal coordinate moves the equality residual accordingly") {
        Eigen::VectorXd x = res.primal;
        x(0) += 1e-3;
        ResidualReport rep = kkt_residuals(p, x, res.eq_duals, res.cone_duals);
        // A e_0 * 1e-3 has magnitude 1e-3 in the single row
        CHECK(rep.primal_eq_inf == doctest::Approx(1e-3).epsilon(1e-6));
    }
    SUBCASE("zero vectors give the rhs norm as the primal residual") {
        ResidualReport rep = kkt_residuals(p, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1),
                                           Eigen::VectorXd::Zero(2));
        CHECK(rep.primal_eq_inf == doctest::Approx(1.0));
    }
}

TEST_CASE("determinism: identical programs produce identical iterates") {
    SolverResult a = solve(norm_socp());
    SolverResult b = solve(norm_socp());
    REQUIRE(a.status == SolveStatus::kOptimal);
    REQUIRE(b.status == SolveStatus::kOptimal);
    CHECK(a.newton_iterations == b.newton_iterations);
    for (int i = 0; i < a.primal.size(); ++i) CHECK(a.primal(i) == b.primal(i));
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].primal_residual == b.log[i].primal_residual);
        CHECK(a.log[i].step_length == b.log[i].step_length);
    }
}

TEST_CASE("certified gap bound is non-increasing across barrier stages") {
    SolverResult res = solve(degenerate_lp());
    REQUIRE(res.status == SolveStatus::kOptimal);
    double prev = 1e300;
    for (const auto& rec : res.log) {
        CHECK(rec.gap_bound <= prev + 1e-15);
        prev = rec.gap_bound;
    }
}

TEST_CASE("unbounded objective is detected") {
    ConicProgram p;
    p.num_vars = 1;
    p.free_count = 0;
    p.nonneg_count = 1;
    p.objective = Eigen::VectorXd::Constant(1, -1.0);
    p.eq_matrix.resize(0, 1);
    p.eq_rhs.resize(0);
    p.nonneg_tags = {ConstraintTag::kGeneric};
    SolverResult res = solve(p);
    CHECK(res.status == SolveStatus::kUnbounded);
}

TEST_CASE("infeasible equalities are reported") {
    ConicProgram p;
    p.num_vars = 1;
    p.free_count = 0;
    p.nonneg_count = 1;
    p.objective = Eigen::VectorXd::Constant(1, 1.0);
    p.eq_matrix.resize(1, 1);
    p.eq_matrix.insert(0, 0) = 1.0;
    p.eq_rhs = Eigen::VectorXd::Constant(1, -2.0);  // x = -2 contradicts x >= 0
    p.row_tags = {ConstraintTag::kGeneric};
    p.nonneg_tags = {ConstraintTag::kGeneric};
    SolverResult res = solve(p);
    CHECK(res.status == SolveStatus::kInfeasible);
}

TEST_CASE("randomized SOCPs: certified gaps and KKT cross-checks") {
    // Programs built from a known interior primal and a known dual certificate,
    // so a bounded optimum exists.
    std::mt19937_64 gen(20240811ull);
    auto uniform = [&](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
    };

    for (int trial = 0; trial < 20; ++trial) {
        const int n_free = 1 + static_cast<int>(uniform(0, 3));
        const int n_orth = 2 + static_cast<int>(uniform(0, 4));
        const int n_blocks = 1 + static_cast<int>(uniform(0, 2));
        std::vector<int> dims;
        int n = n_free + n_orth;
        std::vector<SocBlockSpec> blocks;
        for (int b = 0; b < n_blocks; ++b) {
            const int d = 2 + static_cast<int>(uniform(0, 3));
            blocks.push_back({n, d, ConstraintTag::kGeneric});
            dims.push_back(d);
            n += d;
        }
        const int m = 1 + static_cast<int>(uniform(0, std::max(1, n / 2)));

        // strictly interior primal
        Eigen::VectorXd x0(n);
        for (int j = 0; j < n_free; ++j) x0(j) = uniform(-2, 2);
        for (int j = n_free; j < n_free + n_orth; ++j) x0(j) = uniform(0.5, 2.0);
        for (const auto& blk : blocks) {
            double nrm = 0;
            for (int j = blk.start + 1; j < blk.start + blk.dim; ++j) {
                x0(j) = uniform(-1, 1);
                nrm += x0(j) * x0(j);
            }
            x0(blk.start) = std::sqrt(nrm) + uniform(0.3, 1.2);
        }
        // random equalities consistent with x0
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, n);
        for (int r = 0; r < m; ++r)
            for (int j = 0; j < n; ++j)
                if (uniform(0, 1) < 0.5) a(r, j) = uniform(-1, 1);
        Eigen::VectorXd b = a * x0;
        // dual certificate: s in the interior of the dual cone, c = s - A'y
        Eigen::VectorXd y0(m);
        for (int r = 0; r < m; ++r) y0(r) = uniform(-1, 1);
        Eigen::VectorXd s0 = Eigen::VectorXd::Zero(n);
        for (int j = n_free; j < n_free + n_orth; ++j) s0(j) = uniform(0.2, 1.5);
        for (const auto& blk : blocks) {
            double nrm = 0;
            for (int j = blk.start + 1; j < blk.start + blk.dim; ++j) {
                s0(j) = uniform(-0.5, 0.5);
                nrm += s0(j) * s0(j);
            }
            s0(blk.start) = std::sqrt(nrm) + uniform(0.2, 1.0);
        }
        ConicProgram p;
        p.num_vars = n;
        p.free_count = n_free;
        p.nonneg_count = n_orth;
        p.soc_blocks = blocks;
        p.objective = s0 - a.transpose() * y0;
        p.eq_matrix = a.sparseView();
        p.eq_rhs = b;
        p.row_tags.assign(static_cast<size_t>(m), ConstraintTag::kGeneric);
        p.nonneg_tags.assign(static_cast<size_t>(n_orth), ConstraintTag::kGeneric);
        if (trial % 2 == 0) p.initial_guess = x0;  // exercise both start paths

        SolverResult res = solve(p);
        INFO("trial ", trial, " n=", n, " m=", m);
        REQUIRE(res.status == SolveStatus::kOptimal);
        CHECK(res.residuals.rel_gap <= 1e-7);
        CHECK(res.residuals.primal_eq_rel <= 1e-7);

        ResidualReport recheck = kkt_residuals(p, res.primal, res.eq_duals, res.cone_duals);
        CHECK(std::abs(recheck.duality_gap - res.residuals.duality_gap) <= 1e-10);
        CHECK(std::abs(recheck.primal_eq_inf - res.residuals.primal_eq_inf) <= 1e-10);
        CHECK(recheck.cone_violation <= 1e-9);

        // weak duality sanity: the certificate bounds the optimum from below
        const double dual_bound = -p.eq_rhs.dot(y0);
        CHECK(res.objective >= dual_bound - 1e-5 * (1 + std::abs(res.objective)));
    }
}
