#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "hytrain/conic_program.hpp"

namespace hytrain {

struct SolverSettings {
    double eps_feas = 1e-7;   // equality feasibility, relative to 1 + ||b||_inf
    double eps_gap = 1e-7;    // duality gap, relative to 1 + |objective|
    int max_newton = 600;     // total Newton steps across all barrier stages
    int max_outer = 60;       // barrier parameter increases
    int max_inner = 60;       // Newton steps per centering
    double mu = 10.0;         // barrier growth factor, > 1
    double t_init = 0.0;      // 0 = pick so the initial gap bound is ~10 (1 + |obj|)
    double backtrack_sigma = 0.1;   // sufficient-decrease fraction on ||r||
    double backtrack_beta = 0.5;    // step shrink factor
    double frac_to_boundary = 0.99;
    double kkt_reg = 1e-8;    // quasi-definite regularization delta
    int refine_steps = 2;     // iterative refinement sweeps per KKT solve
    bool collect_log = true;

    void validate() const;
};

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit, kNumericalBreakdown };

const char* status_name(SolveStatus s);

struct IterationRecord {
    int outer = 0;
    int inner = 0;
    double barrier_t = 0;
    double primal_residual = 0;  // ||Ax-b||_inf on the reduced system
    double dual_residual = 0;    // ||t c + grad phi + A'y||_2
    double gap_bound = 0;        // nu / t
    double step_length = 0;
    double newton_decrement = 0;
};

struct ResidualReport {
    double primal_eq_inf = 0;       // ||Ax - b||_inf
    double primal_eq_rel = 0;       // / (1 + ||b||_inf)
    double cone_violation = 0;      // worst primal cone violation
    double dual_stationarity = 0;   // ||c + A'y - s||_inf
    double dual_cone_violation = 0; // worst dual cone violation of s
    double complementarity = 0;     // |x . s|
    double duality_gap = 0;         // c'x + b'y
    double rel_gap = 0;             // |gap| / (1 + |c'x|)
};

struct SolverResult {
    SolveStatus status = SolveStatus::kNumericalBreakdown;
    Eigen::VectorXd primal;      // full decision vector of the original program
    Eigen::VectorXd eq_duals;    // one per original equality row
    Eigen::VectorXd cone_duals;  // one per original variable (0 on free slots)
    double objective = 0;        // c'x + constant
    ResidualReport residuals;
    int newton_iterations = 0;
    double wall_seconds = 0;
    std::string message;

    std::vector<IterationRecord> log;
    // factorization structure stats
    double kkt_dim = 0;
    double kkt_nonzeros = 0;
    double factor_nonzeros = 0;  // fill-in of the LDL factor
};

// Solve a standard-form conic program with a primal log-barrier interior-point
// method (infeasible-start Newton on the equality-constrained centering
// problems). Deterministic for fixed inputs and settings.
SolverResult solve(const ConicProgram& program, const SolverSettings& settings = {});

// Evaluate KKT residuals of a primal/dual candidate against the original
// program. Pure and deterministic.
ResidualReport kkt_residuals(const ConicProgram& program, const Eigen::VectorXd& primal,
                             const Eigen::VectorXd& eq_duals, const Eigen::VectorXd& cone_duals);

// Render an iteration log as line-oriented text.
std::string format_iteration_log(const std::vector<IterationRecord>& log);

}  // namespace hytrain
