#include "hytrain/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

namespace hytrain {

void SolverSettings::validate() const {
    if (!(eps_feas > 0) || !(eps_gap > 0)) throw std::invalid_argument("tolerances must be positive");
    if (!(mu > 1)) throw std::invalid_argument("barrier growth factor must exceed 1");
    if (max_newton < 1 || max_outer < 1 || max_inner < 1)
        throw std::invalid_argument("iteration limits must be positive");
    if (!(backtrack_beta > 0 && backtrack_beta < 1) || !(backtrack_sigma > 0 && backtrack_sigma < 1))
        throw std::invalid_argument("backtracking parameters out of range");
}

const char* status_name(SolveStatus s) {
    switch (s) {
        case SolveStatus::kOptimal: return "optimal";
        case SolveStatus::kInfeasible: return "infeasible";
        case SolveStatus::kUnbounded: return "unbounded";
        case SolveStatus::kIterationLimit: return "iteration-limit";
        case SolveStatus::kNumericalBreakdown: return "numerical-breakdown";
    }
    return "unknown";
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using SpMatRow = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Affine function of the reduced variables: c0 + sum coef * u[idx].
struct AffineExpr {
    double c0 = 0;
    std::vector<std::pair<int, double>> terms;  // reduced index, coefficient

    double eval(const VectorXd& u) const {
        double v = c0;
        for (const auto& [j, a] : terms) v += a * u(j);
        return v;
    }
    double dir(const VectorXd& du) const {
        double v = 0;
        for (const auto& [j, a] : terms) v += a * du(j);
        return v;
    }
};

struct ElimOrth {
    int old_var = -1;
    int old_row = -1;
    double row_coef = 0;  // coefficient of old_var in old_row
    AffineExpr expr;      // x_old = expr(u)
};

struct ElimSoc {
    int block_index = -1;            // into program.soc_blocks
    std::vector<int> old_vars;       // block coordinates, head first
    std::vector<int> old_rows;       // defining row per coordinate
    std::vector<double> row_coefs;
    std::vector<AffineExpr> coords;  // w_i = coords[i](u)
    std::vector<int> support;        // union of term indices, sorted
    Eigen::MatrixXd G;               // dim x support: gradient of each coordinate
};

struct NativeSoc {
    int start = 0;  // reduced index of cone head
    int dim = 0;
};

// Outcome of structural presolve on the original program.
struct Reduction {
    int n_orig = 0, m_orig = 0;
    std::vector<int> new_of_old;      // >=0 remaining, -1 fixed, -2 eliminated
    std::vector<int> old_of_new;
    std::vector<double> fixed_value;  // by old index
    std::vector<int> fix_row;         // fixing row per fixed var, else -1
    std::vector<int> fix_order;       // old vars in fixing order
    std::vector<ElimOrth> elim_orth;
    std::vector<ElimSoc> elim_soc;
    std::vector<int> orth_remaining;  // reduced indices
    std::vector<NativeSoc> soc_remaining;
    std::vector<int> old_row_of_new;
    SpMat A;  // reduced equality system
    VectorXd b, c;
    double c0 = 0;
    double nu = 0;  // total barrier degree
    bool infeasible = false;
    std::string message;
};

enum class VarKind : char { kFree, kOrth, kSocHead, kSocTail };

Reduction presolve(const ConicProgram& p) {
    Reduction red;
    const int n = p.num_vars;
    const int m = p.num_rows();
    red.n_orig = n;
    red.m_orig = m;

    std::vector<VarKind> kind(static_cast<size_t>(n), VarKind::kFree);
    std::vector<int> block_of(static_cast<size_t>(n), -1);
    for (int j = p.free_count; j < p.free_count + p.nonneg_count; ++j)
        kind[static_cast<size_t>(j)] = VarKind::kOrth;
    for (size_t bi = 0; bi < p.soc_blocks.size(); ++bi) {
        const auto& blk = p.soc_blocks[bi];
        for (int j = blk.start; j < blk.start + blk.dim; ++j) {
            kind[static_cast<size_t>(j)] = (j == blk.start) ? VarKind::kSocHead : VarKind::kSocTail;
            block_of[static_cast<size_t>(j)] = static_cast<int>(bi);
        }
    }

    // Row-wise and column-wise entry lists of the original matrix.
    SpMatRow arow = p.eq_matrix;
    struct Entry {
        int row, col;
        double val;
        bool active = true;
    };
    std::vector<Entry> entries;
    std::vector<std::vector<int>> row_entries(static_cast<size_t>(m));
    std::vector<std::vector<int>> col_entries(static_cast<size_t>(n));
    for (int r = 0; r < arow.outerSize(); ++r)
        for (SpMatRow::InnerIterator it(arow, r); it; ++it) {
            if (it.value() == 0.0) continue;
            int e = static_cast<int>(entries.size());
            entries.push_back({r, static_cast<int>(it.col()), it.value(), true});
            row_entries[static_cast<size_t>(r)].push_back(e);
            col_entries[static_cast<size_t>(it.col())].push_back(e);
        }

    std::vector<int> row_active(static_cast<size_t>(m), 0);
    std::vector<int> col_active(static_cast<size_t>(n), 0);
    for (int r = 0; r < m; ++r) row_active[static_cast<size_t>(r)] = static_cast<int>(row_entries[static_cast<size_t>(r)].size());
    for (int j = 0; j < n; ++j) col_active[static_cast<size_t>(j)] = static_cast<int>(col_entries[static_cast<size_t>(j)].size());

    VectorXd rhs = p.eq_rhs;
    const double b_scale = 1.0 + (m > 0 ? p.eq_rhs.cwiseAbs().maxCoeff() : 0.0);
    std::vector<char> row_removed(static_cast<size_t>(m), 0);
    std::vector<char> var_fixed(static_cast<size_t>(n), 0);
    red.fixed_value.assign(static_cast<size_t>(n), 0.0);
    red.fix_row.assign(static_cast<size_t>(n), -1);
    red.c0 = p.objective_constant;

    // Pass 1: repeatedly fix variables appearing alone in an equality row.
    // Cone-member variables are left alone (fixing them on the cone boundary
    // would destroy strict interiority).
    bool changed = true;
    while (changed) {
        changed = false;
        for (int r = 0; r < m; ++r) {
            if (row_removed[static_cast<size_t>(r)]) continue;
            if (row_active[static_cast<size_t>(r)] == 0) {
                if (std::abs(rhs(r)) > 1e-9 * b_scale) {
                    red.infeasible = true;
                    red.message = "presolve: equality row " + std::to_string(r) +
                                  " reduced to 0 = " + std::to_string(rhs(r));
                    return red;
                }
                row_removed[static_cast<size_t>(r)] = 1;
                continue;
            }
            if (row_active[static_cast<size_t>(r)] != 1) continue;
            int ei = -1;
            for (int e : row_entries[static_cast<size_t>(r)])
                if (entries[static_cast<size_t>(e)].active) ei = e;
            const int j = entries[static_cast<size_t>(ei)].col;
            if (kind[static_cast<size_t>(j)] == VarKind::kSocHead || kind[static_cast<size_t>(j)] == VarKind::kSocTail)
                continue;
            double val = rhs(entries[static_cast<size_t>(ei)].row) / entries[static_cast<size_t>(ei)].val;
            if (kind[static_cast<size_t>(j)] == VarKind::kOrth) {
                if (val < -1e-9 * b_scale) {
                    red.infeasible = true;
                    red.message = "presolve: nonnegative variable " + std::to_string(j) +
                                  " pinned to negative value " + std::to_string(val);
                    return red;
                }
                val = std::max(val, 0.0);
            }
            var_fixed[static_cast<size_t>(j)] = 1;
            red.fixed_value[static_cast<size_t>(j)] = val;
            red.fix_row[static_cast<size_t>(j)] = r;
            red.fix_order.push_back(j);
            red.c0 += p.objective(j) * val;
            row_removed[static_cast<size_t>(r)] = 1;
            for (int e : col_entries[static_cast<size_t>(j)]) {
                auto& en = entries[static_cast<size_t>(e)];
                if (!en.active) continue;
                en.active = false;
                --row_active[static_cast<size_t>(en.row)];
                --col_active[static_cast<size_t>(j)];
                if (en.row != r) rhs(en.row) -= en.val * val;
            }
            changed = true;
        }
    }

    // Pass 2: eliminate orthant variables that appear in exactly one row whose
    // other variables are all free. The row then defines the variable as an
    // affine slack and both leave the Newton system; the barrier keeps acting
    // on the affine expression.
    std::vector<char> row_claimed(static_cast<size_t>(m), 0);
    std::vector<char> var_elim(static_cast<size_t>(n), 0);
    auto row_ok_for_elim = [&](int r, int self) {
        if (row_removed[static_cast<size_t>(r)] || row_claimed[static_cast<size_t>(r)]) return false;
        for (int e : row_entries[static_cast<size_t>(r)]) {
            const auto& en = entries[static_cast<size_t>(e)];
            if (!en.active || en.col == self) continue;
            if (kind[static_cast<size_t>(en.col)] != VarKind::kFree) return false;
        }
        return true;
    };

    std::vector<int> elim_orth_vars;
    for (int j = p.free_count; j < p.free_count + p.nonneg_count; ++j) {
        if (var_fixed[static_cast<size_t>(j)] || col_active[static_cast<size_t>(j)] != 1) continue;
        int er = -1;
        for (int e : col_entries[static_cast<size_t>(j)])
            if (entries[static_cast<size_t>(e)].active) er = entries[static_cast<size_t>(e)].row;
        if (!row_ok_for_elim(er, j)) continue;
        row_claimed[static_cast<size_t>(er)] = 1;
        var_elim[static_cast<size_t>(j)] = 1;
        elim_orth_vars.push_back(j);
    }

    std::vector<int> elim_soc_blocks;
    for (size_t bi = 0; bi < p.soc_blocks.size(); ++bi) {
        const auto& blk = p.soc_blocks[bi];
        bool ok = true;
        std::vector<int> rows;
        for (int j = blk.start; j < blk.start + blk.dim && ok; ++j) {
            if (var_fixed[static_cast<size_t>(j)] || col_active[static_cast<size_t>(j)] != 1) {
                ok = false;
                break;
            }
            int er = -1;
            for (int e : col_entries[static_cast<size_t>(j)])
                if (entries[static_cast<size_t>(e)].active) er = entries[static_cast<size_t>(e)].row;
            if (!row_ok_for_elim(er, j)) ok = false;
            for (int prev : rows)
                if (prev == er) ok = false;
            rows.push_back(er);
        }
        if (!ok) continue;
        for (int r : rows) row_claimed[static_cast<size_t>(r)] = 1;
        for (int j = blk.start; j < blk.start + blk.dim; ++j) var_elim[static_cast<size_t>(j)] = 1;
        elim_soc_blocks.push_back(static_cast<int>(bi));
    }

    // Reduced variable numbering (original order preserved).
    red.new_of_old.assign(static_cast<size_t>(n), -3);
    for (int j = 0; j < n; ++j) {
        if (var_fixed[static_cast<size_t>(j)]) red.new_of_old[static_cast<size_t>(j)] = -1;
        else if (var_elim[static_cast<size_t>(j)]) red.new_of_old[static_cast<size_t>(j)] = -2;
        else {
            red.new_of_old[static_cast<size_t>(j)] = static_cast<int>(red.old_of_new.size());
            red.old_of_new.push_back(j);
        }
    }
    const int n_red = static_cast<int>(red.old_of_new.size());

    // Affine expressions for eliminated variables.
    auto make_expr = [&](int j, int er, double* coef_out) {
        AffineExpr ex;
        double aj = 0;
        for (int e : row_entries[static_cast<size_t>(er)]) {
            const auto& en = entries[static_cast<size_t>(e)];
            if (!en.active) continue;
            if (en.col == j) aj = en.val;
        }
        ex.c0 = rhs(er) / aj;
        for (int e : row_entries[static_cast<size_t>(er)]) {
            const auto& en = entries[static_cast<size_t>(e)];
            if (!en.active || en.col == j) continue;
            ex.terms.push_back({red.new_of_old[static_cast<size_t>(en.col)], -en.val / aj});
        }
        std::sort(ex.terms.begin(), ex.terms.end());
        *coef_out = aj;
        return ex;
    };

    for (int j : elim_orth_vars) {
        ElimOrth eo;
        eo.old_var = j;
        for (int e : col_entries[static_cast<size_t>(j)])
            if (entries[static_cast<size_t>(e)].active) eo.old_row = entries[static_cast<size_t>(e)].row;
        eo.expr = make_expr(j, eo.old_row, &eo.row_coef);
        red.elim_orth.push_back(std::move(eo));
    }
    for (int bi : elim_soc_blocks) {
        const auto& blk = p.soc_blocks[static_cast<size_t>(bi)];
        ElimSoc es;
        es.block_index = bi;
        for (int j = blk.start; j < blk.start + blk.dim; ++j) {
            es.old_vars.push_back(j);
            int er = -1;
            for (int e : col_entries[static_cast<size_t>(j)])
                if (entries[static_cast<size_t>(e)].active) er = entries[static_cast<size_t>(e)].row;
            es.old_rows.push_back(er);
            double coef = 0;
            es.coords.push_back(make_expr(j, er, &coef));
            es.row_coefs.push_back(coef);
        }
        for (const auto& ex : es.coords)
            for (const auto& [t, a] : ex.terms) es.support.push_back(t);
        std::sort(es.support.begin(), es.support.end());
        es.support.erase(std::unique(es.support.begin(), es.support.end()), es.support.end());
        es.G = Eigen::MatrixXd::Zero(blk.dim, static_cast<Eigen::Index>(es.support.size()));
        for (int i = 0; i < blk.dim; ++i)
            for (const auto& [t, a] : es.coords[static_cast<size_t>(i)].terms) {
                auto pos = std::lower_bound(es.support.begin(), es.support.end(), t) - es.support.begin();
                es.G(i, pos) += a;
            }
        red.elim_soc.push_back(std::move(es));
    }

    // Remaining cones in reduced indexing.
    for (int j = p.free_count; j < p.free_count + p.nonneg_count; ++j)
        if (red.new_of_old[static_cast<size_t>(j)] >= 0)
            red.orth_remaining.push_back(red.new_of_old[static_cast<size_t>(j)]);
    for (size_t bi = 0; bi < p.soc_blocks.size(); ++bi) {
        const auto& blk = p.soc_blocks[bi];
        const int nj = red.new_of_old[static_cast<size_t>(blk.start)];
        if (nj >= 0) red.soc_remaining.push_back({nj, blk.dim});
    }

    // Reduced system: surviving rows over remaining variables.
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<double> brow;
    for (int r = 0; r < m; ++r) {
        if (row_removed[static_cast<size_t>(r)] || row_claimed[static_cast<size_t>(r)]) continue;
        const int nr = static_cast<int>(red.old_row_of_new.size());
        red.old_row_of_new.push_back(r);
        for (int e : row_entries[static_cast<size_t>(r)]) {
            const auto& en = entries[static_cast<size_t>(e)];
            if (!en.active) continue;
            trips.emplace_back(nr, red.new_of_old[static_cast<size_t>(en.col)], en.val);
        }
        brow.push_back(rhs(r));
    }
    const int m_red = static_cast<int>(brow.size());
    red.A.resize(m_red, n_red);
    red.A.setFromTriplets(trips.begin(), trips.end());
    red.b = Eigen::Map<VectorXd>(brow.data(), m_red);

    // Reduced objective: contributions of eliminated variables fold in.
    red.c = VectorXd::Zero(n_red);
    for (int j = 0; j < n; ++j)
        if (red.new_of_old[static_cast<size_t>(j)] >= 0) red.c(red.new_of_old[static_cast<size_t>(j)]) = p.objective(j);
    for (const auto& eo : red.elim_orth) {
        const double cj = p.objective(eo.old_var);
        if (cj == 0.0) continue;
        red.c0 += cj * eo.expr.c0;
        for (const auto& [t, a] : eo.expr.terms) red.c(t) += cj * a;
    }
    for (const auto& es : red.elim_soc)
        for (size_t i = 0; i < es.old_vars.size(); ++i) {
            const double cj = p.objective(es.old_vars[static_cast<size_t>(i)]);
            if (cj == 0.0) continue;
            red.c0 += cj * es.coords[i].c0;
            for (const auto& [t, a] : es.coords[i].terms) red.c(t) += cj * a;
        }

    // Barrier degree: every orthant variable contributes 1, every SOC block 2;
    // fixed variables are constants and contribute nothing.
    int orth_count = 0;
    for (int j = p.free_count; j < p.free_count + p.nonneg_count; ++j)
        if (!var_fixed[static_cast<size_t>(j)]) ++orth_count;
    int soc_count = 0;
    for (size_t bi = 0; bi < p.soc_blocks.size(); ++bi)
        if (!var_fixed[static_cast<size_t>(p.soc_blocks[bi].start)]) ++soc_count;
    red.nu = orth_count + 2.0 * soc_count;
    return red;
}

// ---------------------------------------------------------------------------
// Barrier evaluation over the reduced space.

struct BarrierEval {
    double phi = 0;
    VectorXd grad;
    bool interior = true;
};

struct SocState {
    VectorXd w;      // cone coordinates
    double d = 0;    // t^2 - ||u||^2
};

class Barrier {
public:
    Barrier(const Reduction& red) : red_(red) {}

    // Evaluates phi and its gradient; interior=false when any argument leaves
    // the cone interior.
    BarrierEval eval(const VectorXd& u) const {
        BarrierEval out;
        out.grad = VectorXd::Zero(u.size());
        for (int k : red_.orth_remaining) {
            const double s = u(k);
            if (!(s > 0)) return leave(out);
            out.phi -= std::log(s);
            out.grad(k) -= 1.0 / s;
        }
        for (const auto& ns : red_.soc_remaining) {
            const double t = u(ns.start);
            double un2 = 0;
            for (int i = 1; i < ns.dim; ++i) un2 += u(ns.start + i) * u(ns.start + i);
            const double d = t * t - un2;
            if (!(t > 0) || !(d > 0)) return leave(out);
            out.phi -= std::log(d);
            out.grad(ns.start) -= 2.0 * t / d;
            for (int i = 1; i < ns.dim; ++i) out.grad(ns.start + i) += 2.0 * u(ns.start + i) / d;
        }
        for (const auto& eo : red_.elim_orth) {
            const double s = eo.expr.eval(u);
            if (!(s > 0)) return leave(out);
            out.phi -= std::log(s);
            for (const auto& [j, a] : eo.expr.terms) out.grad(j) -= a / s;
        }
        for (const auto& es : red_.elim_soc) {
            const int dim = static_cast<int>(es.coords.size());
            const double t = es.coords[0].eval(u);
            double un2 = 0;
            for (int i = 1; i < dim; ++i) {
                const double wi = es.coords[static_cast<size_t>(i)].eval(u);
                un2 += wi * wi;
            }
            const double d = t * t - un2;
            if (!(t > 0) || !(d > 0)) return leave(out);
            out.phi -= std::log(d);
            // chain rule: grad into support via G
            Eigen::VectorXd gw(dim);
            gw(0) = -2.0 * t / d;
            for (int i = 1; i < dim; ++i) gw(i) = 2.0 * es.coords[static_cast<size_t>(i)].eval(u) / d;
            Eigen::VectorXd gs = es.G.transpose() * gw;
            for (size_t q = 0; q < es.support.size(); ++q) out.grad(es.support[q]) += gs(static_cast<Eigen::Index>(q));
        }
        return out;
    }

    // Largest step <= alpha_cap keeping every barrier argument strictly interior.
    double max_step(const VectorXd& u, const VectorXd& du, double frac, double alpha_cap) const {
        double a = alpha_cap;
        auto bound_linear = [&](double s, double ds) {
            if (ds < 0) a = std::min(a, frac * (-s / ds));
        };
        for (int k : red_.orth_remaining) bound_linear(u(k), du(k));
        for (const auto& eo : red_.elim_orth) bound_linear(eo.expr.eval(u), eo.expr.dir(du));
        auto bound_soc = [&](double t, double dt, const VectorXd& w, const VectorXd& dw) {
            bound_linear(t, dt);
            const double qa = dt * dt - dw.squaredNorm();
            const double qb = 2.0 * (t * dt - w.dot(dw));
            const double qc = t * t - w.squaredNorm();
            // roots of qa x^2 + qb x + qc = 0; qc > 0 at an interior point
            double root = kInf;
            if (std::abs(qa) < 1e-300) {
                if (qb < 0) root = -qc / qb;
            } else {
                const double disc = qb * qb - 4.0 * qa * qc;
                if (disc >= 0) {
                    const double sq = std::sqrt(disc);
                    const double r1 = (-qb - sq) / (2.0 * qa);
                    const double r2 = (-qb + sq) / (2.0 * qa);
                    if (r1 > 0) root = std::min(root, r1);
                    if (r2 > 0) root = std::min(root, r2);
                }
            }
            if (root < kInf) a = std::min(a, frac * root);
        };
        for (const auto& ns : red_.soc_remaining) {
            VectorXd w(ns.dim - 1), dw(ns.dim - 1);
            for (int i = 1; i < ns.dim; ++i) {
                w(i - 1) = u(ns.start + i);
                dw(i - 1) = du(ns.start + i);
            }
            bound_soc(u(ns.start), du(ns.start), w, dw);
        }
        for (const auto& es : red_.elim_soc) {
            const int dim = static_cast<int>(es.coords.size());
            VectorXd w(dim - 1), dw(dim - 1);
            for (int i = 1; i < dim; ++i) {
                w(i - 1) = es.coords[static_cast<size_t>(i)].eval(u);
                dw(i - 1) = es.coords[static_cast<size_t>(i)].dir(du);
            }
            bound_soc(es.coords[0].eval(u), es.coords[0].dir(du), w, dw);
        }
        return a;
    }

private:
    static BarrierEval leave(BarrierEval& e) {
        e.interior = false;
        return e;
    }
    const Reduction& red_;
};

// ---------------------------------------------------------------------------
// KKT system with fixed sparsity pattern:
//   [ H + delta I   A' ] [dx]   [rhs_x]
//   [ A            -delta I ] [dy] = [rhs_y]
// Only the lower triangle is stored. The Hessian slots are rewritten each
// iteration; A and the regularization are part of the constant base.

class KktSystem {
public:
    KktSystem(const Reduction& red, double delta) : red_(red), delta_(delta) {
        n_ = static_cast<int>(red.A.cols());
        m_ = static_cast<int>(red.A.rows());
        dim_ = n_ + m_;
        build_pattern();
        ldlt_.analyzePattern(kkt_);
    }

    int dim() const { return dim_; }
    double nnz() const { return static_cast<double>(kkt_.nonZeros()); }
    double factor_nnz() const { return factor_nnz_; }
    double delta() const { return delta_; }

    void set_delta(double d) {
        delta_ = d;
        rebuild_base();
    }

    // Assemble the Hessian at u and factorize. The diagonal regularization is
    // proportional to the local diagonal magnitude, so barrier terms that grow
    // like t^2 near the boundary stay relatively (not absolutely) regularized.
    // Returns false on numerical failure.
    bool factorize(const VectorXd& u) {
        std::copy(base_values_.begin(), base_values_.end(), kkt_.valuePtr());
        double* vals = kkt_.valuePtr();

        for (size_t q = 0; q < red_.orth_remaining.size(); ++q) {
            const int k = red_.orth_remaining[q];
            const double s = u(k);
            orth_w_[q] = 1.0 / (s * s);
            vals[orth_diag_pos_[q]] += orth_w_[q];
        }
        for (size_t q = 0; q < red_.soc_remaining.size(); ++q) {
            const auto& ns = red_.soc_remaining[q];
            Eigen::MatrixXd h = soc_hessian(u.segment(ns.start, ns.dim));
            scatter_dense(h, native_pos_[q]);
            native_h_[q] = std::move(h);
        }
        for (size_t q = 0; q < red_.elim_orth.size(); ++q) {
            const auto& eo = red_.elim_orth[q];
            const double s = eo.expr.eval(u);
            const double w = 1.0 / (s * s);
            const auto& pos = elim_orth_pos_[q];
            size_t pi = 0;
            const auto& terms = eo.expr.terms;
            for (size_t i = 0; i < terms.size(); ++i)
                for (size_t j = 0; j <= i; ++j)
                    vals[pos[pi++]] += w * terms[i].second * terms[j].second;
            elim_orth_w_[q] = w;
        }
        for (size_t q = 0; q < red_.elim_soc.size(); ++q) {
            const auto& es = red_.elim_soc[q];
            const int dim = static_cast<int>(es.coords.size());
            VectorXd w(dim);
            for (int i = 0; i < dim; ++i) w(i) = es.coords[static_cast<size_t>(i)].eval(u);
            Eigen::MatrixXd hw = soc_hessian(w);
            Eigen::MatrixXd h = es.G.transpose() * hw * es.G;
            scatter_dense(h, elim_soc_pos_[q]);
            elim_soc_h_[q] = std::move(h);
        }
        for (int i = 0; i < n_; ++i) {
            double& dpos = vals[diag_pos_[static_cast<size_t>(i)]];
            dpos += delta_ * std::max(1.0, std::abs(dpos));
        }

        ldlt_.factorize(kkt_);
        if (ldlt_.info() != Eigen::Success) return false;
        factor_nnz_ = static_cast<double>(ldlt_.matrixL().nestedExpression().nonZeros());
        return true;
    }

    // Solve the (regularized) KKT system with iterative refinement against the
    // unregularized operator; reports the achieved relative residual.
    VectorXd solve(const VectorXd& rhs, int refine_steps, double* rel_residual = nullptr) const {
        const double scale = 1.0 + rhs.cwiseAbs().maxCoeff();
        VectorXd x = ldlt_.solve(rhs);
        VectorXd r = rhs - apply_unregularized(x);
        for (int it = 0; it < refine_steps; ++it) {
            if (r.cwiseAbs().maxCoeff() <= 1e-13 * scale) break;
            x += ldlt_.solve(r);
            r = rhs - apply_unregularized(x);
        }
        if (rel_residual) *rel_residual = r.cwiseAbs().maxCoeff() / scale;
        return x;
    }

    // H * v using the Hessian assembled by the last factorize() (without the
    // regularization term).
    VectorXd apply_hessian(const VectorXd& v) const {
        VectorXd out = VectorXd::Zero(n_);
        for (size_t q = 0; q < red_.orth_remaining.size(); ++q) {
            const int k = red_.orth_remaining[q];
            out(k) += orth_w_[q] * v(k);
        }
        for (size_t q = 0; q < red_.soc_remaining.size(); ++q) {
            const auto& ns = red_.soc_remaining[q];
            out.segment(ns.start, ns.dim) += native_h_[q] * v.segment(ns.start, ns.dim);
        }
        for (size_t q = 0; q < red_.elim_orth.size(); ++q) {
            const auto& terms = red_.elim_orth[q].expr.terms;
            double dot = 0;
            for (const auto& [j, a] : terms) dot += a * v(j);
            dot *= elim_orth_w_[q];
            for (const auto& [j, a] : terms) out(j) += a * dot;
        }
        for (size_t q = 0; q < red_.elim_soc.size(); ++q) {
            const auto& es = red_.elim_soc[q];
            const auto& h = elim_soc_h_[q];
            VectorXd vloc(static_cast<Eigen::Index>(es.support.size()));
            for (size_t i = 0; i < es.support.size(); ++i) vloc(static_cast<Eigen::Index>(i)) = v(es.support[i]);
            VectorXd oloc = h * vloc;
            for (size_t i = 0; i < es.support.size(); ++i) out(es.support[i]) += oloc(static_cast<Eigen::Index>(i));
        }
        return out;
    }

private:
    static Eigen::MatrixXd soc_hessian(const VectorXd& w) {
        const int dim = static_cast<int>(w.size());
        const double t = w(0);
        const double d = t * t - w.tail(dim - 1).squaredNorm();
        Eigen::MatrixXd h = Eigen::MatrixXd::Identity(dim, dim) * (2.0 / d);
        h(0, 0) = -2.0 / d;
        VectorXd p(dim);
        p(0) = t;
        p.tail(dim - 1) = -w.tail(dim - 1);
        h += (4.0 / (d * d)) * p * p.transpose();
        return h;
    }

    VectorXd apply_unregularized(const VectorXd& v) const {
        VectorXd out(dim_);
        out.head(n_) = apply_hessian(v.head(n_));
        out.head(n_) += red_.A.transpose() * v.tail(m_);
        out.tail(m_) = red_.A * v.head(n_);
        return out;
    }

    void add_pattern(std::vector<Eigen::Triplet<double>>& trips, int r, int c) {
        trips.emplace_back(std::max(r, c), std::min(r, c), 0.0);
    }

    void build_pattern() {
        std::vector<Eigen::Triplet<double>> trips;
        for (int i = 0; i < n_; ++i) trips.emplace_back(i, i, 0.0);  // delta + orth slots
        for (const auto& ns : red_.soc_remaining)
            for (int i = 0; i < ns.dim; ++i)
                for (int j = 0; j <= i; ++j) add_pattern(trips, ns.start + i, ns.start + j);
        for (const auto& eo : red_.elim_orth)
            for (size_t i = 0; i < eo.expr.terms.size(); ++i)
                for (size_t j = 0; j <= i; ++j)
                    add_pattern(trips, eo.expr.terms[i].first, eo.expr.terms[j].first);
        for (const auto& es : red_.elim_soc)
            for (size_t i = 0; i < es.support.size(); ++i)
                for (size_t j = 0; j <= i; ++j) add_pattern(trips, es.support[i], es.support[j]);
        for (int k = 0; k < red_.A.outerSize(); ++k)
            for (SpMat::InnerIterator it(red_.A, k); it; ++it)
                trips.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()), 0.0);
        for (int r = 0; r < m_; ++r) trips.emplace_back(n_ + r, n_ + r, 0.0);

        kkt_.resize(dim_, dim_);
        kkt_.setFromTriplets(trips.begin(), trips.end());
        kkt_.makeCompressed();

        // position lookup for the dynamic entries
        auto pos_of = [&](int r, int c) {
            const int* outer = kkt_.outerIndexPtr();
            const int* inner = kkt_.innerIndexPtr();
            for (int p = outer[c]; p < outer[c + 1]; ++p)
                if (inner[p] == r) return p;
            throw std::logic_error("kkt pattern lookup failed");
        };
        diag_pos_.clear();
        for (int i = 0; i < n_; ++i) diag_pos_.push_back(pos_of(i, i));
        orth_diag_pos_.clear();
        for (int k : red_.orth_remaining) orth_diag_pos_.push_back(pos_of(k, k));
        native_pos_.clear();
        for (const auto& ns : red_.soc_remaining) {
            std::vector<int> pos;
            for (int i = 0; i < ns.dim; ++i)
                for (int j = 0; j <= i; ++j) pos.push_back(pos_of(ns.start + i, ns.start + j));
            native_pos_.push_back(std::move(pos));
        }
        elim_orth_pos_.clear();
        for (const auto& eo : red_.elim_orth) {
            std::vector<int> pos;
            for (size_t i = 0; i < eo.expr.terms.size(); ++i)
                for (size_t j = 0; j <= i; ++j) {
                    const int a = eo.expr.terms[i].first, b = eo.expr.terms[j].first;
                    pos.push_back(pos_of(std::max(a, b), std::min(a, b)));
                }
            elim_orth_pos_.push_back(std::move(pos));
        }
        elim_soc_pos_.clear();
        for (const auto& es : red_.elim_soc) {
            std::vector<int> pos;
            for (size_t i = 0; i < es.support.size(); ++i)
                for (size_t j = 0; j <= i; ++j) {
                    const int a = es.support[i], b = es.support[j];
                    pos.push_back(pos_of(std::max(a, b), std::min(a, b)));
                }
            elim_soc_pos_.push_back(std::move(pos));
        }

        native_h_.resize(red_.soc_remaining.size());
        orth_w_.resize(red_.orth_remaining.size(), 0.0);
        elim_orth_w_.resize(red_.elim_orth.size(), 0.0);
        elim_soc_h_.resize(red_.elim_soc.size());
        rebuild_base();
    }

    void rebuild_base() {
        base_values_.assign(static_cast<size_t>(kkt_.nonZeros()), 0.0);
        // constant parts: A block and the -delta dual regularization; the
        // primal-side regularization is applied proportionally in factorize()
        auto pos_of = [&](int r, int c) {
            const int* outer = kkt_.outerIndexPtr();
            const int* inner = kkt_.innerIndexPtr();
            for (int p = outer[c]; p < outer[c + 1]; ++p)
                if (inner[p] == r) return p;
            throw std::logic_error("kkt base lookup failed");
        };
        for (int r = 0; r < m_; ++r) base_values_[static_cast<size_t>(pos_of(n_ + r, n_ + r))] -= delta_;
        for (int k = 0; k < red_.A.outerSize(); ++k)
            for (SpMat::InnerIterator it(red_.A, k); it; ++it)
                base_values_[static_cast<size_t>(pos_of(n_ + static_cast<int>(it.row()), static_cast<int>(it.col())))] +=
                    it.value();
    }

    void scatter_dense(const Eigen::MatrixXd& h, const std::vector<int>& pos) {
        double* vals = kkt_.valuePtr();
        size_t pi = 0;
        for (int i = 0; i < h.rows(); ++i)
            for (int j = 0; j <= i; ++j) vals[pos[pi++]] += h(i, j);
    }

    const Reduction& red_;
    double delta_;
    int n_ = 0, m_ = 0, dim_ = 0;
    SpMat kkt_;
    std::vector<double> base_values_;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    std::vector<int> diag_pos_, orth_diag_pos_;
    std::vector<std::vector<int>> native_pos_, elim_orth_pos_, elim_soc_pos_;
    std::vector<Eigen::MatrixXd> native_h_, elim_soc_h_;
    std::vector<double> orth_w_, elim_orth_w_;
    double factor_nnz_ = 0;
};

// ---------------------------------------------------------------------------

// Starting point: free entries from the hint (or zero), cone entries pushed
// strictly inside. Eliminated cone expressions may still be violated; a few
// damped least-squares corrections restore interiority when possible.
VectorXd initial_point(const ConicProgram& p, const Reduction& red, const Barrier& barrier,
                       bool* interior_found) {
    const int n_red = static_cast<int>(red.A.cols());
    VectorXd u = VectorXd::Zero(n_red);
    const bool has_guess = p.initial_guess.size() == p.num_vars;
    for (int k = 0; k < n_red; ++k) {
        if (has_guess) u(k) = p.initial_guess(red.old_of_new[static_cast<size_t>(k)]);
    }
    for (int k : red.orth_remaining) u(k) = std::max(u(k), 1.0);
    for (const auto& ns : red.soc_remaining) {
        double un = u.segment(ns.start + 1, ns.dim - 1).norm();
        u(ns.start) = std::max(u(ns.start), 1.01 * un + 1.0);
    }

    // Restore interiority of eliminated cone expressions if needed.
    for (int attempt = 0; attempt < 40; ++attempt) {
        BarrierEval be = barrier.eval(u);
        if (be.interior) {
            *interior_found = true;
            return u;
        }
        // Collect violated terms and their desired margins.
        std::vector<Eigen::Triplet<double>> jt;
        std::vector<double> resid;
        auto add_row = [&](const AffineExpr& ex, double current, double target) {
            const int r = static_cast<int>(resid.size());
            for (const auto& [j, a] : ex.terms) jt.emplace_back(r, j, a);
            resid.push_back(target - current);
        };
        for (const auto& eo : red.elim_orth) {
            const double s = eo.expr.eval(u);
            const double target = 0.1 * (1.0 + std::abs(eo.expr.c0));
            if (s < target) add_row(eo.expr, s, 2.0 * target);
        }
        for (const auto& es : red.elim_soc) {
            const int dim = static_cast<int>(es.coords.size());
            double un = 0;
            for (int i = 1; i < dim; ++i) {
                const double wi = es.coords[static_cast<size_t>(i)].eval(u);
                un += wi * wi;
            }
            un = std::sqrt(un);
            const double t = es.coords[0].eval(u);
            const double target = un + 0.1 * (1.0 + std::abs(es.coords[0].c0));
            if (t < target) add_row(es.coords[0], t, un + 0.2 * (1.0 + std::abs(es.coords[0].c0)));
        }
        if (resid.empty()) {
            // violation must come from native cones; they were set interior above
            break;
        }
        SpMat jac(static_cast<int>(resid.size()), n_red);
        jac.setFromTriplets(jt.begin(), jt.end());
        SpMat normal = SpMat(jac.transpose() * jac);
        for (int i = 0; i < n_red; ++i) normal.coeffRef(i, i) += 1e-6;
        Eigen::SimplicialLDLT<SpMat> ls(normal);
        if (ls.info() != Eigen::Success) break;
        VectorXd rv = Eigen::Map<VectorXd>(resid.data(), static_cast<Eigen::Index>(resid.size()));
        VectorXd step = ls.solve(jac.transpose() * rv);
        if (!step.allFinite() || step.norm() < 1e-14) break;
        u += step;
        // keep native cones interior
        for (int k : red.orth_remaining) u(k) = std::max(u(k), 1e-6);
        for (const auto& ns : red.soc_remaining) {
            double un = u.segment(ns.start + 1, ns.dim - 1).norm();
            u(ns.start) = std::max(u(ns.start), 1.01 * un + 1e-6);
        }
    }
    *interior_found = barrier.eval(u).interior;
    return u;
}

// Reconstruct the full original primal vector from the reduced one.
VectorXd reconstruct_primal(const ConicProgram& p, const Reduction& red, const VectorXd& u) {
    VectorXd x(p.num_vars);
    for (int j = 0; j < p.num_vars; ++j) {
        const int nj = red.new_of_old[static_cast<size_t>(j)];
        if (nj >= 0) x(j) = u(nj);
        else if (nj == -1) x(j) = red.fixed_value[static_cast<size_t>(j)];
        else x(j) = 0;  // filled below
    }
    for (const auto& eo : red.elim_orth) x(eo.old_var) = eo.expr.eval(u);
    for (const auto& es : red.elim_soc)
        for (size_t i = 0; i < es.old_vars.size(); ++i) x(es.old_vars[i]) = es.coords[i].eval(u);
    return x;
}

// Dual vectors (eq_duals, cone_duals) for the original program from the
// reduced multipliers nu_red and the barrier gradient at the final iterate.
void reconstruct_duals(const ConicProgram& p, const Reduction& red, const VectorXd& u,
                       const VectorXd& nu_red, double barrier_t, VectorXd* eq_duals,
                       VectorXd* cone_duals) {
    VectorXd y = VectorXd::Zero(p.num_rows());
    VectorXd s = VectorXd::Zero(p.num_vars);
    for (int r = 0; r < static_cast<int>(red.old_row_of_new.size()); ++r)
        y(red.old_row_of_new[static_cast<size_t>(r)]) = nu_red(r) / barrier_t;

    for (int k : red.orth_remaining)
        s(red.old_of_new[static_cast<size_t>(k)]) = 1.0 / (barrier_t * u(k));
    for (const auto& ns : red.soc_remaining) {
        const double t = u(ns.start);
        VectorXd w = u.segment(ns.start + 1, ns.dim - 1);
        const double d = t * t - w.squaredNorm();
        s(red.old_of_new[static_cast<size_t>(ns.start)]) = 2.0 * t / (d * barrier_t);
        for (int i = 1; i < ns.dim; ++i)
            s(red.old_of_new[static_cast<size_t>(ns.start + i)]) = -2.0 * w(i - 1) / (d * barrier_t);
    }
    for (const auto& eo : red.elim_orth) {
        const double sv = eo.expr.eval(u);
        s(eo.old_var) = 1.0 / (barrier_t * sv);
        // the eliminated row's multiplier restores stationarity of the slack
        y(eo.old_row) = (s(eo.old_var) - p.objective(eo.old_var)) / eo.row_coef;
    }
    for (const auto& es : red.elim_soc) {
        const int dim = static_cast<int>(es.coords.size());
        VectorXd w(dim);
        for (int i = 0; i < dim; ++i) w(i) = es.coords[static_cast<size_t>(i)].eval(u);
        const double d = w(0) * w(0) - w.tail(dim - 1).squaredNorm();
        VectorXd sb(dim);
        sb(0) = 2.0 * w(0) / (d * barrier_t);
        sb.tail(dim - 1) = -2.0 / (d * barrier_t) * w.tail(dim - 1);
        for (int i = 0; i < dim; ++i) {
            s(es.old_vars[static_cast<size_t>(i)]) = sb(i);
            y(es.old_rows[static_cast<size_t>(i)]) =
                (sb(i) - p.objective(es.old_vars[static_cast<size_t>(i)])) / es.row_coefs[static_cast<size_t>(i)];
        }
    }

    // Fixed-variable rows, in reverse fixing order: the fixing row of an
    // earlier-fixed variable never contains a later-fixed one, so each
    // multiplier only depends on already-known duals.
    SpMat acol = p.eq_matrix;
    for (auto it = red.fix_order.rbegin(); it != red.fix_order.rend(); ++it) {
        const int j = *it;
        const int r = red.fix_row[static_cast<size_t>(j)];
        double other = 0, coef = 0;
        for (SpMat::InnerIterator en(acol, j); en; ++en) {
            if (static_cast<int>(en.row()) == r) coef = en.value();
            else other += en.value() * y(en.row());
        }
        y(r) = (s(j) - p.objective(j) - other) / coef;
    }
    *eq_duals = y;
    *cone_duals = s;
}

}  // namespace

ResidualReport kkt_residuals(const ConicProgram& p, const VectorXd& x, const VectorXd& y,
                             const VectorXd& s) {
    if (x.size() != p.num_vars || y.size() != p.num_rows() || s.size() != p.num_vars)
        throw std::invalid_argument("kkt_residuals: dimension mismatch");
    ResidualReport rep;
    const VectorXd ax_b = p.eq_matrix * x - p.eq_rhs;
    rep.primal_eq_inf = ax_b.size() ? ax_b.cwiseAbs().maxCoeff() : 0.0;
    const double bs = 1.0 + (p.eq_rhs.size() ? p.eq_rhs.cwiseAbs().maxCoeff() : 0.0);
    rep.primal_eq_rel = rep.primal_eq_inf / bs;

    double pviol = 0, dviol = 0;
    for (int j = p.free_count; j < p.free_count + p.nonneg_count; ++j) {
        pviol = std::max(pviol, -x(j));
        dviol = std::max(dviol, -s(j));
    }
    for (int j = 0; j < p.free_count; ++j) dviol = std::max(dviol, std::abs(s(j)));
    for (const auto& blk : p.soc_blocks) {
        const double tx = x(blk.start);
        const double nx = x.segment(blk.start + 1, blk.dim - 1).norm();
        pviol = std::max(pviol, nx - tx);
        const double ts = s(blk.start);
        const double nssegment = s.segment(blk.start + 1, blk.dim - 1).norm();
        dviol = std::max(dviol, nssegment - ts);
    }
    rep.cone_violation = std::max(pviol, 0.0);
    rep.dual_cone_violation = std::max(dviol, 0.0);

    const VectorXd stat = p.objective + p.eq_matrix.transpose() * y - s;
    rep.dual_stationarity = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;
    rep.complementarity = std::abs(x.dot(s));
    const double pobj = p.objective.dot(x);
    rep.duality_gap = pobj + p.eq_rhs.dot(y);
    rep.rel_gap = std::abs(rep.duality_gap) / (1.0 + std::abs(pobj + p.objective_constant));
    return rep;
}

std::string format_iteration_log(const std::vector<IterationRecord>& log) {
    std::ostringstream os;
    os << "outer inner        t       r_pri       r_dual    gap_bound     step   decrement\n";
    char buf[160];
    for (const auto& rec : log) {
        std::snprintf(buf, sizeof(buf), "%5d %5d %8.2e %11.3e %11.3e %11.3e %8.2e %11.3e\n",
                      rec.outer, rec.inner, rec.barrier_t, rec.primal_residual, rec.dual_residual,
                      rec.gap_bound, rec.step_length, rec.newton_decrement);
        os << buf;
    }
    return os.str();
}

SolverResult solve(const ConicProgram& program, const SolverSettings& settings) {
    const auto t_start = std::chrono::steady_clock::now();
    program.validate();
    settings.validate();

    SolverResult res;
    auto finish = [&](SolveStatus st, const std::string& msg) {
        res.status = st;
        res.message = msg;
        res.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return res;
    };

    Reduction red = presolve(program);
    if (red.infeasible) {
        res.primal = VectorXd::Zero(program.num_vars);
        res.eq_duals = VectorXd::Zero(program.num_rows());
        res.cone_duals = VectorXd::Zero(program.num_vars);
        return finish(SolveStatus::kInfeasible, red.message);
    }

    Barrier barrier(red);
    const int n_red = static_cast<int>(red.A.cols());
    const int m_red = static_cast<int>(red.A.rows());
    const double b_scale = 1.0 + (program.eq_rhs.size() ? program.eq_rhs.cwiseAbs().maxCoeff() : 0.0);

    bool interior = false;
    VectorXd u = initial_point(program, red, barrier, &interior);
    if (!interior)
        return finish(SolveStatus::kInfeasible,
                      "no strictly interior starting point found (cone constraints may be "
                      "infeasible)");

    KktSystem kkt(red, settings.kkt_reg);
    res.kkt_dim = kkt.dim();
    res.kkt_nonzeros = kkt.nnz();

    VectorXd nu_mult = VectorXd::Zero(m_red);

    auto primal_obj = [&](const VectorXd& uu) { return red.c.dot(uu) + red.c0; };

    double barrier_t = settings.t_init;
    if (barrier_t <= 0) {
        const double nu_deg = std::max(red.nu, 1.0);
        barrier_t = nu_deg / (10.0 * (1.0 + std::abs(primal_obj(u))));
        barrier_t = std::clamp(barrier_t, 1e-6, 1e6);
    }

    int total_newton = 0;

    auto record = [&](int outer, int inner, double rpri, double rdual, double step, double dec) {
        if (!settings.collect_log) return;
        IterationRecord rec;
        rec.outer = outer;
        rec.inner = inner;
        rec.barrier_t = barrier_t;
        rec.primal_residual = rpri;
        rec.dual_residual = rdual;
        rec.gap_bound = red.nu / barrier_t;
        rec.step_length = step;
        rec.newton_decrement = dec;
        res.log.push_back(rec);
    };

    // The honest certificate: reconstruct the original-space primal and the
    // barrier duals at the given parameter, then re-measure everything through
    // kkt_residuals. Requires a well-centered iterate to be meaningful (the
    // measured duality gap c'x + b'y carries the centering error at first
    // order, so the loop polishes before certifying).
    auto check_optimal = [&](double t_centered) -> bool {
        VectorXd x = reconstruct_primal(program, red, u);
        VectorXd y, s;
        reconstruct_duals(program, red, u, nu_mult, t_centered, &y, &s);
        ResidualReport rep = kkt_residuals(program, x, y, s);
        if (getenv("HYTRAIN_SOLVER_DEBUG"))
            fprintf(stderr, "[chk] t=%.3e rel_gap=%.3e pri=%.3e cone=%.3e stat=%.3e gap=%.3e\n",
                    t_centered, rep.rel_gap, rep.primal_eq_rel, rep.cone_violation,
                    rep.dual_stationarity, rep.duality_gap);
        res.primal = x;
        res.eq_duals = y;
        res.cone_duals = s;
        res.residuals = rep;
        res.objective = program.objective.dot(x) + program.objective_constant;
        return rep.primal_eq_rel <= settings.eps_feas && rep.rel_gap <= settings.eps_gap &&
               rep.cone_violation <= settings.eps_feas;
    };

    // Last successfully centered state; stages that fail restore it and retry
    // with a gentler barrier growth factor.
    VectorXd u_good = u;
    VectorXd nu_good = nu_mult;
    double t_good = 0;  // 0 = nothing centered yet
    double mu_cur = settings.mu;
    bool have_best = false;
    double best_score = kInf;
    struct BestState {
        VectorXd u, nu;
        double t = 0;
    } best;

    enum class StageOutcome { kConverged, kStalled, kLinAlgFail, kIterLimit, kUnboundedRay, kBudget };

    auto run_stage = [&](int outer) -> StageOutcome {
        const bool polish =
            red.nu / barrier_t <= 0.25 * settings.eps_gap * (1.0 + std::abs(primal_obj(u)));
        const double target_decrement = polish ? 1e-9 : 0.25;
        const double stage_obj0 = primal_obj(u);
        double prev_decrement = kInf;
        int no_progress = 0;
        int stall_count = 0;
        int tiny_steps = 0;

        for (int inner = 0; inner < settings.max_inner; ++inner) {
            if (total_newton >= settings.max_newton) return StageOutcome::kBudget;
            BarrierEval be = barrier.eval(u);
            if (!be.interior) return StageOutcome::kLinAlgFail;
            VectorXd r_dual = barrier_t * red.c + be.grad + red.A.transpose() * nu_mult;
            VectorXd r_pri = red.A * u - red.b;
            const double rpri_inf = m_red ? r_pri.cwiseAbs().maxCoeff() : 0.0;

            bool fact_ok = kkt.factorize(u);
            int escal = 0;
            double lin_rel = kInf;
            VectorXd d;
            VectorXd rhs(n_red + m_red);
            rhs.head(n_red) = -r_dual;
            rhs.tail(m_red) = -r_pri;
            while (escal < 5) {
                if (fact_ok) {
                    d = kkt.solve(rhs, settings.refine_steps, &lin_rel);
                    if (d.allFinite() && lin_rel <= 1e-7) break;
                }
                kkt.set_delta(kkt.delta() * 10.0);
                fact_ok = kkt.factorize(u);
                ++escal;
            }
            if (!fact_ok || !d.allFinite() || lin_rel > 1e-5) {
                if (getenv("HYTRAIN_SOLVER_DEBUG"))
                    fprintf(stderr, "[linfail] t=%.3e lin_rel=%.3e fact_ok=%d delta=%.3e\n",
                            barrier_t, lin_rel, fact_ok ? 1 : 0, kkt.delta());
                return StageOutcome::kLinAlgFail;
            }
            VectorXd du = d.head(n_red);
            VectorXd dnu = d.tail(m_red);

            const double decrement2 = du.dot(kkt.apply_hessian(du));
            const double decrement = std::sqrt(std::max(decrement2, 0.0));

            // converged on this centering problem?
            if (rpri_inf <= 0.1 * settings.eps_feas * b_scale && decrement <= target_decrement) {
                record(outer, inner, rpri_inf, r_dual.norm(), 0.0, decrement);
                return StageOutcome::kConverged;
            }
            // numerical floor: the decrement refuses to shrink further
            if (decrement >= 0.5 * prev_decrement && decrement < 1e-4) {
                if (++no_progress >= 4) {
                    record(outer, inner, rpri_inf, r_dual.norm(), 0.0, decrement);
                    return rpri_inf <= settings.eps_feas * b_scale ? StageOutcome::kConverged
                                                                   : StageOutcome::kStalled;
                }
            } else {
                no_progress = 0;
            }
            prev_decrement = decrement;

            double alpha = barrier.max_step(u, du, settings.frac_to_boundary, 1.0);
            const double r0 = std::sqrt(r_dual.squaredNorm() + r_pri.squaredNorm());
            int bt = 0;
            while (bt < 60) {
                VectorXd ut = u + alpha * du;
                BarrierEval bt_eval = barrier.eval(ut);
                if (bt_eval.interior) {
                    VectorXd rd = barrier_t * red.c + bt_eval.grad +
                                  red.A.transpose() * (nu_mult + alpha * dnu);
                    VectorXd rp = red.A * ut - red.b;
                    const double rt = std::sqrt(rd.squaredNorm() + rp.squaredNorm());
                    if (rt <= (1.0 - settings.backtrack_sigma * alpha) * r0) break;
                }
                alpha *= settings.backtrack_beta;
                ++bt;
            }
            if (bt >= 60) {
                if (++stall_count >= 3) {
                    record(outer, inner, rpri_inf, r_dual.norm(), 0.0, decrement);
                    return StageOutcome::kStalled;
                }
                alpha = 0.0;
            } else {
                stall_count = 0;
                if (alpha < 1e-9 && ++tiny_steps >= 5) {
                    record(outer, inner, rpri_inf, r_dual.norm(), alpha, decrement);
                    return StageOutcome::kStalled;
                }
            }

            u += alpha * du;
            nu_mult += alpha * dnu;
            ++total_newton;
            res.newton_iterations = total_newton;
            record(outer, inner, rpri_inf, r_dual.norm(), alpha, decrement);

            if (primal_obj(u) < -1e20 * (1.0 + red.c.cwiseAbs().maxCoeff()))
                return StageOutcome::kUnboundedRay;
            if (rpri_inf <= 1e-6 * b_scale &&
                primal_obj(u) < stage_obj0 - 1e4 * (1.0 + std::abs(stage_obj0)))
                return StageOutcome::kUnboundedRay;
        }
        return StageOutcome::kIterLimit;
    };

    for (int outer = 0; outer < settings.max_outer; ++outer) {
        const StageOutcome outcome = run_stage(outer);
        res.factor_nonzeros = kkt.factor_nnz();

        if (outcome == StageOutcome::kUnboundedRay) {
            check_optimal(barrier_t);
            return finish(SolveStatus::kUnbounded, "objective diverging along a feasible ray");
        }

        if (outcome == StageOutcome::kConverged || outcome == StageOutcome::kIterLimit) {
            if (check_optimal(barrier_t)) return finish(SolveStatus::kOptimal, "converged");
            const double score = res.residuals.primal_eq_rel * 1e3 + res.residuals.rel_gap;
            if (!have_best || score < best_score) {
                have_best = true;
                best_score = score;
                best = {u, nu_mult, barrier_t};
            }
            if (red.nu == 0) {
                // no cones anywhere: the centering solve is the whole problem
                if (res.residuals.primal_eq_rel <= settings.eps_feas &&
                    res.residuals.dual_stationarity <=
                        1e-6 * (1.0 + red.c.cwiseAbs().maxCoeff()))
                    return finish(SolveStatus::kOptimal, "converged (no cones)");
                return finish(SolveStatus::kUnbounded,
                              "linear objective unbounded over the equality set");
            }
            u_good = u;
            nu_good = nu_mult;
            t_good = barrier_t;
            barrier_t *= mu_cur;
            continue;
        }
        if (outcome == StageOutcome::kBudget) break;

        // Stage failed (stall or linear-algebra trouble). Restore the last
        // centered state and advance more cautiously; give up when the growth
        // factor is already minimal.
        if (t_good > 0) {
            u = u_good;
            nu_mult = nu_good;
        }
        if (mu_cur <= 1.26) {
            if (have_best) {
                u = best.u;
                nu_mult = best.nu;
                check_optimal(best.t);
                if (res.residuals.primal_eq_rel > 1e3 * settings.eps_feas)
                    return finish(SolveStatus::kInfeasible,
                                  "equality residual stalled; problem appears infeasible");
                return finish(SolveStatus::kNumericalBreakdown,
                              "stalled before reaching tolerances; best iterate returned");
            }
            check_optimal(barrier_t);
            if (res.residuals.primal_eq_rel > 1e3 * settings.eps_feas)
                return finish(SolveStatus::kInfeasible,
                              "equality residual stalled; problem appears infeasible");
            return finish(SolveStatus::kNumericalBreakdown,
                          "line search stalled before reaching tolerances");
        }
        mu_cur = std::max(std::sqrt(mu_cur), 1.25);
        barrier_t = (t_good > 0 ? t_good : barrier_t / settings.mu) * mu_cur;
    }

    if (have_best) {
        u = best.u;
        nu_mult = best.nu;
        check_optimal(best.t);
    } else {
        check_optimal(barrier_t);
    }
    return finish(SolveStatus::kIterationLimit, "iteration limit reached");
}

}  // namespace hytrain
