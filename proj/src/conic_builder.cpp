#include "hytrain/conic_builder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

namespace hytrain {

namespace {

using Eigen::VectorXd;

// Incremental assembly of the standard-form program: free variables first,
// then orthant slacks, then the SOC copy blocks.
class ProgramAssembler {
public:
    int add_free(int count) {
        const int at = free_count_;
        free_count_ += count;
        return at;
    }

    struct Term {
        int var;
        double coef;
    };

    // a'x (+ slack or copy terms added by the caller) = rhs
    int add_row(const std::vector<Term>& terms, double rhs, ConstraintTag tag) {
        const int r = static_cast<int>(rhs_.size());
        for (const auto& t : terms) trips_.push_back({r, t.var, t.coef});
        rhs_.push_back(rhs);
        row_tags_.push_back(tag);
        return r;
    }

    // expr'x + coef * s = rhs with a fresh slack s >= 0
    void add_slack_row(std::vector<Term> terms, double coef, double rhs, ConstraintTag tag) {
        slack_rows_.push_back({std::move(terms), coef, rhs, tag});
    }

    // Fresh SOC block (t, u...): one equality row per coordinate defining it
    // as an affine function of existing variables: w_i - expr_i'x = rhs_i.
    void add_soc_block(std::vector<std::vector<Term>> exprs, std::vector<double> rhs,
                       ConstraintTag tag) {
        soc_defs_.push_back({std::move(exprs), std::move(rhs), tag});
    }

    void set_objective_term(int var, double coef) { obj_terms_.push_back({var, coef}); }

    ConicProgram finish(double obj_const, int grid_samples, const std::string& formulation) {
        ConicProgram p;
        p.free_count = free_count_;
        p.nonneg_count = static_cast<int>(slack_rows_.size());
        int cursor = free_count_;
        for (const auto& sr : slack_rows_) {
            const int svar = cursor++;
            auto terms = sr.terms;
            terms.push_back({svar, sr.coef});
            add_row(terms, sr.rhs, sr.tag);
            p.nonneg_tags.push_back(sr.tag);
        }
        for (const auto& sd : soc_defs_) {
            const int start = cursor;
            SocBlockSpec blk;
            blk.start = start;
            blk.dim = static_cast<int>(sd.exprs.size());
            blk.tag = sd.tag;
            p.soc_blocks.push_back(blk);
            for (size_t i = 0; i < sd.exprs.size(); ++i) {
                auto terms = sd.exprs[i];
                for (auto& t : terms) t.coef = -t.coef;  // w - expr = rhs
                terms.push_back({cursor, 1.0});
                add_row(terms, sd.rhs[i], sd.tag);
                ++cursor;
            }
        }
        p.num_vars = cursor;

        p.objective = VectorXd::Zero(p.num_vars);
        for (const auto& t : obj_terms_) p.objective(t.var) += t.coef;
        p.objective_constant = obj_const;

        const int m = static_cast<int>(rhs_.size());
        p.eq_matrix.resize(m, p.num_vars);
        std::vector<Eigen::Triplet<double>> et;
        et.reserve(trips_.size());
        for (const auto& t : trips_) et.emplace_back(t.row, t.var, t.coef);
        p.eq_matrix.setFromTriplets(et.begin(), et.end());
        p.eq_rhs = Eigen::Map<VectorXd>(rhs_.data(), m);
        p.row_tags = row_tags_;
        p.num_grid_samples = grid_samples;
        p.formulation = formulation;

        equilibrate_rows(p);
        normalize_objective(p);
        return p;
    }

private:
    struct RowTriplet {
        int row, var;
        double coef;
    };
    struct SlackRow {
        std::vector<Term> terms;
        double coef, rhs;
        ConstraintTag tag;
    };
    struct SocDef {
        std::vector<std::vector<Term>> exprs;
        std::vector<double> rhs;
        ConstraintTag tag;
    };

    // Scale each equality row (and rhs) by its largest coefficient magnitude.
    static void equilibrate_rows(ConicProgram& p) {
        const int m = p.num_rows();
        VectorXd row_max = VectorXd::Zero(m);
        for (int k = 0; k < p.eq_matrix.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(p.eq_matrix, k); it; ++it)
                row_max(it.row()) = std::max(row_max(it.row()), std::abs(it.value()));
        for (int r = 0; r < m; ++r)
            if (row_max(r) == 0) row_max(r) = 1;
        for (int k = 0; k < p.eq_matrix.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(p.eq_matrix, k); it; ++it)
                it.valueRef() /= row_max(it.row());
        p.eq_rhs.array() /= row_max.array();
    }

    static void normalize_objective(ConicProgram& p) {
        const double cmax = p.objective.size() ? p.objective.cwiseAbs().maxCoeff() : 0.0;
        if (cmax > 0) {
            p.objective /= cmax;
            p.objective_constant /= cmax;
            p.objective_unit = cmax;
        }
    }

    int free_count_ = 0;
    std::vector<RowTriplet> trips_;
    std::vector<double> rhs_;
    std::vector<ConstraintTag> row_tags_;
    std::vector<SlackRow> slack_rows_;
    std::vector<SocDef> soc_defs_;
    std::vector<Term> obj_terms_;
};

struct Scales {
    double v = 1, z = 1, zeta = 100, dz = 1, gamma = 1, omega = 1, force = 1, epi = 1;
};

Scales make_scales(const SpatialGrid& grid, const TrainParams& params, const SocQuadratic& soc,
                   const BuilderOptions& opts) {
    Scales s;
    s.v = *std::max_element(grid.v_max_mps.begin(), grid.v_max_mps.end());
    s.z = s.v * s.v;
    s.gamma = 1.0 / std::sqrt(grid.z_stop);
    s.force = std::max({params.motor_force_max_n, -params.motor_force_min_n,
                        -params.brake_force_min_n});
    const double peak_rate = std::max(soc.eval(params.battery_power_max_w), 1e-12);
    s.dz = peak_rate;  // SOC drop over ~1 s at peak battery power
    s.omega = s.dz;
    s.epi = std::max(opts.w_gamma * s.gamma * s.gamma + opts.w_omega * s.omega * s.omega, 1e-12);
    return s;
}

double time_lower_bound(const SpatialGrid& grid) {
    double lb = 0;
    for (size_t k = 0; k < grid.num_intervals(); ++k)
        lb += grid.ds_m[k] / grid.v_max_mps[k];
    return lb;
}

void check_tau(const SpatialGrid& grid, const BuilderOptions& opts, BuildDiagnostics* diag) {
    const double lb = time_lower_bound(grid);
    diag->time_lower_bound_s = lb;
    if (grid.target_time_s < lb) {
        std::ostringstream os;
        os << "target journey time " << grid.target_time_s
           << " s is below the lower bound " << lb << " s implied by the speed limits";
        throw InfeasibleError(os.str());
    }
    if (grid.target_time_s < lb * (1.0 + opts.tau_warn_margin)) {
        std::ostringstream os;
        os << "target journey time " << grid.target_time_s << " s is within "
           << opts.tau_warn_margin * 100 << "% of its lower bound " << lb << " s";
        diag->warnings.push_back(os.str());
    }
}

// Set of samples whose z is pinned to z_stop (dwell plus both endpoints).
std::vector<char> pinned_samples(const SpatialGrid& grid) {
    const size_t n = grid.num_samples();
    std::vector<char> pin(n, 0);
    for (size_t i = 0; i < n; ++i)
        if (grid.dwell_sample[i]) pin[i] = 1;
    pin[0] = 1;
    pin[n - 1] = 1;
    return pin;
}

}  // namespace

BuiltProgram build_concurrent(const SpatialGrid& grid, const TrainParams& params,
                              const BatteryParams& batt, const SurrogateFits& fits,
                              const BuilderOptions& opts) {
    grid.validate();
    params.validate();
    batt.validate(std::max(std::abs(params.battery_power_min_w), params.battery_power_max_w));
    if (!fits.motor.is_convex())
        throw std::invalid_argument("motor surrogate failed its convexity certificate");
    if (!(fits.fuelcell.p0 > 0)) throw std::invalid_argument("fuel cell surrogate must have p0 > 0");
    if (!(fits.soc.alpha > 0) || !(fits.soc.beta > 0))
        throw std::invalid_argument("SOC surrogate must have positive coefficients");

    BuiltProgram out;
    check_tau(grid, opts, &out.diagnostics);

    const int S = static_cast<int>(grid.num_samples());
    const int K = S - 1;
    const Scales sc = make_scales(grid, params, fits.soc, opts);
    const double m_eq = params.equivalent_mass_kg();
    const int n_fc = params.fuelcell_stacks;

    ProgramAssembler a;
    // field-major free layout: 10 physical fields then the epigraph variables
    std::array<int, kNumFields> off{};
    for (int f = 0; f < kNumFields; ++f) off[static_cast<size_t>(f)] = a.add_free(S);
    const int t_off = a.add_free(S);
    auto vat = [&](Field f, int i) { return off[static_cast<size_t>(f)] + i; };
    using T = ProgramAssembler::Term;

    VariableMap& map = out.map;
    map.resize(S);
    map.scale[static_cast<size_t>(Field::kSpeed)] = sc.v;
    map.scale[static_cast<size_t>(Field::kKinetic)] = sc.z;
    map.scale[static_cast<size_t>(Field::kSoc)] = sc.zeta;
    map.scale[static_cast<size_t>(Field::kSocDrop)] = sc.dz;
    map.scale[static_cast<size_t>(Field::kInvSpeed)] = sc.gamma;
    map.scale[static_cast<size_t>(Field::kOmega)] = sc.omega;
    map.scale[static_cast<size_t>(Field::kMotorForce)] = sc.force;
    map.scale[static_cast<size_t>(Field::kBrakeForce)] = sc.force;
    map.scale[static_cast<size_t>(Field::kFuelCellForce)] = sc.force;
    map.scale[static_cast<size_t>(Field::kBatteryForce)] = sc.force;
    for (int f = 0; f < kNumFields; ++f)
        for (int i = 0; i < S; ++i) map.index[static_cast<size_t>(f)][static_cast<size_t>(i)] = off[static_cast<size_t>(f)] + i;

    // --- dynamics, SOC recursion, auxiliary link (one row each per interval)
    for (int k = 0; k < K; ++k) {
        const double ds = grid.ds_m[static_cast<size_t>(k)];
        const double kappa = 2.0 * ds / m_eq;
        const bool dwell = grid.dwell_interval[static_cast<size_t>(k)];
        std::vector<T> dyn{{vat(Field::kKinetic, k + 1), sc.z},
                           {vat(Field::kMotorForce, k), -kappa * sc.force},
                           {vat(Field::kBrakeForce, k), -kappa * sc.force}};
        double rhs = 0;
        if (dwell) {
            dyn.push_back({vat(Field::kKinetic, k), -sc.z});
        } else {
            dyn.push_back({vat(Field::kKinetic, k), -sc.z + kappa * params.davis_c_kg_per_m * sc.z});
            dyn.push_back({vat(Field::kSpeed, k), kappa * params.davis_b_kg_per_s * sc.v});
            rhs = -kappa * (params.davis_a_n + params.mass_kg * params.gravity_mps2 *
                                                   std::sin(grid.gradient_rad[static_cast<size_t>(k)]));
        }
        a.add_row(dyn, rhs, ConstraintTag::kDynamics);

        a.add_row({{vat(Field::kSoc, k + 1), sc.zeta},
                   {vat(Field::kSoc, k), -sc.zeta},
                   {vat(Field::kSocDrop, k), sc.dz}},
                  0.0, ConstraintTag::kSocUpdate);

        a.add_row({{vat(Field::kOmega, k + 1), sc.omega},
                   {vat(Field::kSocDrop, k), -sc.dz},
                   {vat(Field::kBatteryForce, k), fits.soc.beta * ds * sc.force}},
                  0.0, ConstraintTag::kOmegaLink);
    }

    // --- journey time equality
    {
        std::vector<T> row;
        row.reserve(static_cast<size_t>(K));
        for (int k = 0; k < K; ++k)
            row.push_back({vat(Field::kInvSpeed, k), sc.gamma * grid.ds_m[static_cast<size_t>(k)]});
        a.add_row(row, grid.target_time_s, ConstraintTag::kJourneyTime);
    }

    // --- z pins (start/end at rest plus station dwell), SOC pins, unused slots
    const auto pins = pinned_samples(grid);
    for (int i = 0; i < S; ++i)
        if (pins[static_cast<size_t>(i)])
            a.add_row({{vat(Field::kKinetic, i), sc.z}}, grid.z_stop,
                      (i == 0 || i == S - 1) ? ConstraintTag::kTerminalSpeed
                                             : ConstraintTag::kDwellPin);
    a.add_row({{vat(Field::kSoc, 0), sc.zeta}}, batt.soc_init_pct, ConstraintTag::kChargeSustain);
    a.add_row({{vat(Field::kSoc, S - 1), sc.zeta}, {vat(Field::kSoc, 0), -sc.zeta}}, 0.0,
              ConstraintTag::kChargeSustain);
    for (Field f : {Field::kSocDrop, Field::kMotorForce, Field::kBrakeForce, Field::kFuelCellForce,
                    Field::kBatteryForce})
        a.add_row({{vat(f, S - 1), 1.0}}, 0.0, ConstraintTag::kSlotPin);
    a.add_row({{vat(Field::kOmega, 0), 1.0}}, 0.0, ConstraintTag::kSlotPin);

    // --- box bounds via orthant slacks
    for (int i = 0; i < S; ++i) {
        a.add_slack_row({{vat(Field::kSpeed, i), sc.v}}, -1.0, grid.v_min_mps[static_cast<size_t>(i)],
                        ConstraintTag::kBoundSpeed);
        a.add_slack_row({{vat(Field::kSpeed, i), sc.v}}, 1.0, grid.v_max_mps[static_cast<size_t>(i)],
                        ConstraintTag::kBoundSpeed);
        a.add_slack_row({{vat(Field::kKinetic, i), sc.z}}, -1.0, grid.z_min[static_cast<size_t>(i)],
                        ConstraintTag::kBoundKinetic);
        a.add_slack_row({{vat(Field::kKinetic, i), sc.z}}, 1.0, grid.z_max[static_cast<size_t>(i)],
                        ConstraintTag::kBoundKinetic);
        a.add_slack_row({{vat(Field::kSoc, i), sc.zeta}}, -1.0, batt.soc_min_pct,
                        ConstraintTag::kBoundSoc);
        a.add_slack_row({{vat(Field::kSoc, i), sc.zeta}}, 1.0, batt.soc_max_pct,
                        ConstraintTag::kBoundSoc);
    }
    for (int k = 0; k < K; ++k) {
        a.add_slack_row({{vat(Field::kMotorForce, k), sc.force}}, -1.0, params.motor_force_min_n,
                        ConstraintTag::kBoundMotorForce);
        a.add_slack_row({{vat(Field::kMotorForce, k), sc.force}}, 1.0, params.motor_force_max_n,
                        ConstraintTag::kBoundMotorForce);
        a.add_slack_row({{vat(Field::kBrakeForce, k), sc.force}}, -1.0, params.brake_force_min_n,
                        ConstraintTag::kBoundBrakeForce);
        a.add_slack_row({{vat(Field::kBrakeForce, k), sc.force}}, 1.0, 0.0,
                        ConstraintTag::kBoundBrakeForce);
        // speed-scaled power bounds: P_lo * gamma <= F <= P_hi * gamma
        auto power_rows = [&](Field f, double p_lo, double p_hi, ConstraintTag tag) {
            a.add_slack_row({{vat(f, k), sc.force}, {vat(Field::kInvSpeed, k), -p_lo * sc.gamma}},
                            -1.0, 0.0, tag);
            a.add_slack_row({{vat(f, k), sc.force}, {vat(Field::kInvSpeed, k), -p_hi * sc.gamma}},
                            1.0, 0.0, tag);
        };
        power_rows(Field::kMotorForce, params.motor_power_min_w, params.motor_power_max_w,
                   ConstraintTag::kMotorPower);
        power_rows(Field::kBatteryForce, params.battery_power_min_w, params.battery_power_max_w,
                   ConstraintTag::kBatteryPower);
        power_rows(Field::kFuelCellForce, params.fuelcell_power_min_w, params.fuelcell_power_max_w,
                   ConstraintTag::kFuelCellPower);
    }

    // --- relaxed cones
    const double inv_vg = 1.0 / (sc.v * sc.gamma);  // scaled right-hand side of 1 <= v gamma
    for (int i = 0; i < S; ++i) {
        // v^2 <= z  (scaled so the constants are exactly +-1)
        a.add_soc_block({{{vat(Field::kKinetic, i), 1.0}},
                         {{vat(Field::kSpeed, i), 2.0}},
                         {{vat(Field::kKinetic, i), 1.0}}},
                        {1.0, 0.0, -1.0}, ConstraintTag::kSpeedSquare);
        // 1 <= v gamma
        a.add_soc_block({{{vat(Field::kSpeed, i), 1.0}, {vat(Field::kInvSpeed, i), 1.0}},
                         {},
                         {{vat(Field::kSpeed, i), 1.0}, {vat(Field::kInvSpeed, i), -1.0}}},
                        {0.0, 2.0 * std::sqrt(inv_vg), 0.0}, ConstraintTag::kSpeedInverse);
        // epigraph: w_gamma gamma^2 + w_omega omega^2 <= t
        a.add_soc_block(
            {{{t_off + i, sc.epi}},
             {{vat(Field::kInvSpeed, i), 2.0 * std::sqrt(opts.w_gamma) * sc.gamma}},
             {{vat(Field::kOmega, i), 2.0 * std::sqrt(opts.w_omega) * sc.omega}},
             {{t_off + i, sc.epi}}},
            {1.0, 0.0, 0.0, -1.0}, ConstraintTag::kObjectiveEpigraph);
        a.set_objective_term(t_off + i, sc.epi);
    }

    // traction balance: q_m(F_m, z) + P_aux gamma <= n_fc F_fc + F_batt
    Eigen::Matrix2d form;
    form << fits.motor.p20 * sc.z * sc.z / sc.force, 0.5 * fits.motor.p11 * sc.z,
        0.5 * fits.motor.p11 * sc.z, fits.motor.p02 * sc.force;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(form);
    Eigen::Vector2d evals = es.eigenvalues().cwiseMax(0.0);
    const double ev_tol = 1e-14 * std::max(evals.maxCoeff(), 1.0);
    std::vector<Eigen::Vector2d> l_rows;  // rows of L with Q = L'L, in (z~, F~) coords
    for (int q = 1; q >= 0; --q)          // eigen sorts ascending; take large first
        if (evals(q) > ev_tol) l_rows.push_back(std::sqrt(evals(q)) * es.eigenvectors().col(q));

    const double c_gamma = params.aux_power_w * sc.gamma / sc.force;
    const double c_z = fits.motor.p10 * sc.z / sc.force;
    const double c_f = fits.motor.p01;
    const double c_const = fits.motor.p00 / sc.force;
    for (int k = 0; k < K; ++k) {
        std::vector<T> rhs_expr{{vat(Field::kFuelCellForce, k), static_cast<double>(n_fc)},
                                {vat(Field::kBatteryForce, k), 1.0},
                                {vat(Field::kInvSpeed, k), -c_gamma},
                                {vat(Field::kMotorForce, k), -c_f},
                                {vat(Field::kKinetic, k), -c_z}};
        if (l_rows.empty()) {
            a.add_slack_row(rhs_expr, -1.0, c_const, ConstraintTag::kTractionBalance);
            continue;
        }
        std::vector<std::vector<T>> exprs;
        std::vector<double> rhs;
        exprs.push_back(rhs_expr);
        rhs.push_back(1.0 + c_const);
        for (const auto& lr : l_rows) {
            exprs.push_back({{vat(Field::kKinetic, k), 2.0 * lr(0)},
                             {vat(Field::kMotorForce, k), 2.0 * lr(1)}});
            rhs.push_back(0.0);
        }
        exprs.push_back(rhs_expr);
        rhs.push_back(-1.0 + c_const);
        a.add_soc_block(std::move(exprs), std::move(rhs), ConstraintTag::kTractionBalance);
    }

    // battery rate cone: alpha ds F_batt^2 <= Omega_{k+1} gamma_k
    for (int k = 0; k < K; ++k) {
        const double kap = fits.soc.alpha * grid.ds_m[static_cast<size_t>(k)] * sc.force * sc.force /
                           (sc.omega * sc.gamma);
        a.add_soc_block(
            {{{vat(Field::kOmega, k + 1), 1.0}, {vat(Field::kInvSpeed, k), 1.0}},
             {{vat(Field::kBatteryForce, k), 2.0 * std::sqrt(kap)}},
             {{vat(Field::kOmega, k + 1), 1.0}, {vat(Field::kInvSpeed, k), -1.0}}},
            {0.0, 0.0, 0.0}, ConstraintTag::kSocRate);
    }

    // --- objective: fuel plus epigraph terms (added above)
    for (int k = 0; k < K; ++k) {
        const double ds = grid.ds_m[static_cast<size_t>(k)];
        a.set_objective_term(vat(Field::kFuelCellForce, k), n_fc * fits.fuelcell.p0 * sc.force * ds);
        a.set_objective_term(vat(Field::kKinetic, k), n_fc * fits.fuelcell.p1 * sc.z * ds);
    }

    // --- strictly interior starting guess
    out.program = a.finish(0.0, S, "concurrent");
    {
        VectorXd g = VectorXd::Zero(out.program.num_vars);
        for (int i = 0; i < S; ++i) {
            const double vg = 0.6 * grid.v_max_mps[static_cast<size_t>(i)];
            const double zg = pins[static_cast<size_t>(i)] ? grid.z_stop
                                                           : std::min(1.2 * vg * vg,
                                                                      0.99 * grid.z_max[static_cast<size_t>(i)]);
            g(vat(Field::kSpeed, i)) = vg / sc.v;
            g(vat(Field::kKinetic, i)) = zg / sc.z;
            g(vat(Field::kSoc, i)) = batt.soc_init_pct / sc.zeta;
            g(vat(Field::kInvSpeed, i)) = 1.3 / vg / sc.gamma;
            g(vat(Field::kOmega, i)) = i == 0 ? 0.0 : 0.1;
            g(vat(Field::kSocDrop, i)) = 0.0;
            g(vat(Field::kMotorForce, i)) = 0.0;
            g(vat(Field::kBrakeForce, i)) = -0.01;
            const double gam = 1.3 / vg;
            g(vat(Field::kFuelCellForce, i)) =
                0.5 * (params.fuelcell_power_min_w + params.fuelcell_power_max_w) * gam / sc.force;
            g(vat(Field::kBatteryForce, i)) = 0.0;
            const double gq = opts.w_gamma * gam * gam;
            g(t_off + i) = (gq + 1.0) * 1.5 / sc.epi;
        }
        out.program.initial_guess = g;
    }
    out.program.validate();
    map.validate(out.program.num_vars);
    return out;
}

BuiltProgram build_speed_only(const SpatialGrid& grid, const TrainParams& params,
                              const BuilderOptions& opts) {
    grid.validate();
    params.validate();

    BuiltProgram out;
    check_tau(grid, opts, &out.diagnostics);

    const int S = static_cast<int>(grid.num_samples());
    const int K = S - 1;
    SocQuadratic dummy{1e-12, 1e-12};
    const Scales sc = make_scales(grid, params, dummy, opts);
    const double m_eq = params.equivalent_mass_kg();

    ProgramAssembler a;
    const int v_off = a.add_free(S);
    const int z_off = a.add_free(S);
    const int g_off = a.add_free(S);
    const int fm_off = a.add_free(S);
    const int fb_off = a.add_free(S);
    const int t_off = a.add_free(S);
    using T = ProgramAssembler::Term;

    VariableMap& map = out.map;
    map.resize(S);
    map.scale[static_cast<size_t>(Field::kSpeed)] = sc.v;
    map.scale[static_cast<size_t>(Field::kKinetic)] = sc.z;
    map.scale[static_cast<size_t>(Field::kInvSpeed)] = sc.gamma;
    map.scale[static_cast<size_t>(Field::kMotorForce)] = sc.force;
    map.scale[static_cast<size_t>(Field::kBrakeForce)] = sc.force;
    for (int i = 0; i < S; ++i) {
        map.index[static_cast<size_t>(Field::kSpeed)][static_cast<size_t>(i)] = v_off + i;
        map.index[static_cast<size_t>(Field::kKinetic)][static_cast<size_t>(i)] = z_off + i;
        map.index[static_cast<size_t>(Field::kInvSpeed)][static_cast<size_t>(i)] = g_off + i;
        map.index[static_cast<size_t>(Field::kMotorForce)][static_cast<size_t>(i)] = fm_off + i;
        map.index[static_cast<size_t>(Field::kBrakeForce)][static_cast<size_t>(i)] = fb_off + i;
    }

    for (int k = 0; k < K; ++k) {
        const double ds = grid.ds_m[static_cast<size_t>(k)];
        const double kappa = 2.0 * ds / m_eq;
        const bool dwell = grid.dwell_interval[static_cast<size_t>(k)];
        std::vector<T> dyn{{z_off + k + 1, sc.z},
                           {fm_off + k, -kappa * sc.force},
                           {fb_off + k, -kappa * sc.force}};
        double rhs = 0;
        if (dwell) {
            dyn.push_back({z_off + k, -sc.z});
        } else {
            dyn.push_back({z_off + k, -sc.z + kappa * params.davis_c_kg_per_m * sc.z});
            dyn.push_back({v_off + k, kappa * params.davis_b_kg_per_s * sc.v});
            rhs = -kappa * (params.davis_a_n + params.mass_kg * params.gravity_mps2 *
                                                   std::sin(grid.gradient_rad[static_cast<size_t>(k)]));
        }
        a.add_row(dyn, rhs, ConstraintTag::kDynamics);
    }
    {
        std::vector<T> row;
        for (int k = 0; k < K; ++k)
            row.push_back({g_off + k, sc.gamma * grid.ds_m[static_cast<size_t>(k)]});
        a.add_row(row, grid.target_time_s, ConstraintTag::kJourneyTime);
    }
    const auto pins = pinned_samples(grid);
    for (int i = 0; i < S; ++i)
        if (pins[static_cast<size_t>(i)])
            a.add_row({{z_off + i, sc.z}}, grid.z_stop,
                      (i == 0 || i == S - 1) ? ConstraintTag::kTerminalSpeed
                                             : ConstraintTag::kDwellPin);
    a.add_row({{fm_off + S - 1, 1.0}}, 0.0, ConstraintTag::kSlotPin);
    a.add_row({{fb_off + S - 1, 1.0}}, 0.0, ConstraintTag::kSlotPin);

    for (int i = 0; i < S; ++i) {
        a.add_slack_row({{v_off + i, sc.v}}, -1.0, grid.v_min_mps[static_cast<size_t>(i)],
                        ConstraintTag::kBoundSpeed);
        a.add_slack_row({{v_off + i, sc.v}}, 1.0, grid.v_max_mps[static_cast<size_t>(i)],
                        ConstraintTag::kBoundSpeed);
        a.add_slack_row({{z_off + i, sc.z}}, -1.0, grid.z_min[static_cast<size_t>(i)],
                        ConstraintTag::kBoundKinetic);
        a.add_slack_row({{z_off + i, sc.z}}, 1.0, grid.z_max[static_cast<size_t>(i)],
                        ConstraintTag::kBoundKinetic);
    }
    for (int k = 0; k < K; ++k) {
        a.add_slack_row({{fm_off + k, sc.force}}, -1.0, params.motor_force_min_n,
                        ConstraintTag::kBoundMotorForce);
        a.add_slack_row({{fm_off + k, sc.force}}, 1.0, params.motor_force_max_n,
                        ConstraintTag::kBoundMotorForce);
        a.add_slack_row({{fb_off + k, sc.force}}, -1.0, params.brake_force_min_n,
                        ConstraintTag::kBoundBrakeForce);
        a.add_slack_row({{fb_off + k, sc.force}}, 1.0, 0.0, ConstraintTag::kBoundBrakeForce);
        a.add_slack_row(
            {{fm_off + k, sc.force}, {g_off + k, -params.motor_power_min_w * sc.gamma}}, -1.0, 0.0,
            ConstraintTag::kMotorPower);
        a.add_slack_row(
            {{fm_off + k, sc.force}, {g_off + k, -params.motor_power_max_w * sc.gamma}}, 1.0, 0.0,
            ConstraintTag::kMotorPower);
    }

    const double inv_vg = 1.0 / (sc.v * sc.gamma);
    for (int i = 0; i < S; ++i) {
        a.add_soc_block({{{z_off + i, 1.0}}, {{v_off + i, 2.0}}, {{z_off + i, 1.0}}},
                        {1.0, 0.0, -1.0}, ConstraintTag::kSpeedSquare);
        a.add_soc_block({{{v_off + i, 1.0}, {g_off + i, 1.0}},
                         {},
                         {{v_off + i, 1.0}, {g_off + i, -1.0}}},
                        {0.0, 2.0 * std::sqrt(inv_vg), 0.0}, ConstraintTag::kSpeedInverse);
        a.add_soc_block({{{t_off + i, sc.epi}},
                         {{g_off + i, 2.0 * std::sqrt(opts.w_gamma) * sc.gamma}},
                         {{t_off + i, sc.epi}}},
                        {1.0, 0.0, -1.0}, ConstraintTag::kObjectiveEpigraph);
        a.set_objective_term(t_off + i, sc.epi);
    }
    for (int k = 0; k < K; ++k)
        a.set_objective_term(fm_off + k, sc.force * grid.ds_m[static_cast<size_t>(k)]);

    out.program = a.finish(0.0, S, "speed_only");
    {
        VectorXd g = VectorXd::Zero(out.program.num_vars);
        for (int i = 0; i < S; ++i) {
            const double vg = 0.6 * grid.v_max_mps[static_cast<size_t>(i)];
            const double zg = pins[static_cast<size_t>(i)]
                                  ? grid.z_stop
                                  : std::min(1.2 * vg * vg, 0.99 * grid.z_max[static_cast<size_t>(i)]);
            g(v_off + i) = vg / sc.v;
            g(z_off + i) = zg / sc.z;
            g(g_off + i) = 1.3 / vg / sc.gamma;
            g(fb_off + i) = -0.01;
            const double gam = 1.3 / vg;
            g(t_off + i) = (opts.w_gamma * gam * gam + 1.0) * 1.5 / sc.epi;
        }
        out.program.initial_guess = g;
    }
    out.program.validate();
    map.validate(out.program.num_vars);
    return out;
}

BuiltProgram build_ems_given_speed(const SpatialGrid& grid, const TrainParams& params,
                                   const BatteryParams& batt, const SurrogateFits& fits,
                                   const FixedProfile& profile, const BuilderOptions& opts) {
    grid.validate();
    params.validate();
    batt.validate(std::max(std::abs(params.battery_power_min_w), params.battery_power_max_w));

    const int S = static_cast<int>(grid.num_samples());
    const int K = S - 1;
    if (static_cast<int>(profile.v.size()) != S || static_cast<int>(profile.z.size()) != S)
        throw std::invalid_argument("fixed profile length does not match the grid");

    // Check the profile against grid bounds and dwell pins.
    const auto pins = pinned_samples(grid);
    for (int i = 0; i < S; ++i) {
        const double tol_v = 1e-6 * (1.0 + grid.v_max_mps[static_cast<size_t>(i)]);
        if (profile.v[static_cast<size_t>(i)] > grid.v_max_mps[static_cast<size_t>(i)] + tol_v ||
            profile.v[static_cast<size_t>(i)] <= 0)
            throw InfeasibleError("fixed speed profile violates the speed bounds at sample " +
                                  std::to_string(i));
        if (pins[static_cast<size_t>(i)] &&
            std::abs(profile.z[static_cast<size_t>(i)] - grid.z_stop) > 1e-6 * grid.z_stop + 1e-12)
            throw InfeasibleError("fixed speed profile violates the dwell constraint at sample " +
                                  std::to_string(i));
    }

    // Reconstruct gamma and the force split when not provided.
    std::vector<double> gamma = profile.gamma;
    if (gamma.empty()) {
        gamma.resize(static_cast<size_t>(S));
        for (int i = 0; i < S; ++i) gamma[static_cast<size_t>(i)] = 1.0 / profile.v[static_cast<size_t>(i)];
    }
    std::vector<double> fm = profile.motor_force, fb = profile.brake_force;
    if (fm.empty()) {
        fm.assign(static_cast<size_t>(S), 0.0);
        fb.assign(static_cast<size_t>(S), 0.0);
        const double m_eq = params.equivalent_mass_kg();
        for (int k = 0; k < K; ++k) {
            const double ds = grid.ds_m[static_cast<size_t>(k)];
            const bool dwell = grid.dwell_interval[static_cast<size_t>(k)];
            const double f_ext =
                dwell ? 0.0
                      : external_force(profile.v[static_cast<size_t>(k)],
                                       grid.gradient_rad[static_cast<size_t>(k)], params);
            const double f_tot = m_eq * (profile.z[static_cast<size_t>(k + 1)] -
                                         profile.z[static_cast<size_t>(k)]) /
                                     (2.0 * ds) +
                                 f_ext;
            const double f_hi = std::min(params.motor_force_max_n,
                                         params.motor_power_max_w * gamma[static_cast<size_t>(k)]);
            const double f_lo = std::max(params.motor_force_min_n,
                                         params.motor_power_min_w * gamma[static_cast<size_t>(k)]);
            if (f_tot > f_hi + 1e-6 * params.motor_force_max_n)
                throw InfeasibleError("fixed profile demands more traction than the motor allows "
                                      "at sample " + std::to_string(k));
            fm[static_cast<size_t>(k)] = std::clamp(f_tot, f_lo, f_hi);
            fb[static_cast<size_t>(k)] = std::min(0.0, f_tot - fm[static_cast<size_t>(k)]);
        }
    }

    BuiltProgram out;
    out.diagnostics.time_lower_bound_s = time_lower_bound(grid);
    const Scales sc = make_scales(grid, params, fits.soc, opts);
    const int n_fc = params.fuelcell_stacks;

    // Feasibility of the electrical balance at each interval.
    for (int k = 0; k < K; ++k) {
        const double demand = fits.motor.eval(fm[static_cast<size_t>(k)], profile.z[static_cast<size_t>(k)]) +
                              params.aux_power_w * gamma[static_cast<size_t>(k)];
        const double g = gamma[static_cast<size_t>(k)];
        const double supply_hi = (n_fc * params.fuelcell_power_max_w + params.battery_power_max_w) * g;
        if (demand > supply_hi + 1e-6 * sc.force)
            throw InfeasibleError("fixed profile demands more power than the powertrain supplies "
                                  "at sample " + std::to_string(k));
    }

    ProgramAssembler a;
    const int zeta_off = a.add_free(S);
    const int dz_off = a.add_free(S);
    const int om_off = a.add_free(S);
    const int fc_off = a.add_free(S);
    const int fbatt_off = a.add_free(S);
    const int t_off = a.add_free(S);
    using T = ProgramAssembler::Term;

    VariableMap& map = out.map;
    map.resize(S);
    map.scale[static_cast<size_t>(Field::kSoc)] = sc.zeta;
    map.scale[static_cast<size_t>(Field::kSocDrop)] = sc.dz;
    map.scale[static_cast<size_t>(Field::kOmega)] = sc.omega;
    map.scale[static_cast<size_t>(Field::kFuelCellForce)] = sc.force;
    map.scale[static_cast<size_t>(Field::kBatteryForce)] = sc.force;
    for (int i = 0; i < S; ++i) {
        const auto si = static_cast<size_t>(i);
        map.index[static_cast<size_t>(Field::kSoc)][si] = zeta_off + i;
        map.index[static_cast<size_t>(Field::kSocDrop)][si] = dz_off + i;
        map.index[static_cast<size_t>(Field::kOmega)][si] = om_off + i;
        map.index[static_cast<size_t>(Field::kFuelCellForce)][si] = fc_off + i;
        map.index[static_cast<size_t>(Field::kBatteryForce)][si] = fbatt_off + i;
        map.fixed[static_cast<size_t>(Field::kSpeed)][si] = profile.v[si];
        map.fixed[static_cast<size_t>(Field::kKinetic)][si] = profile.z[si];
        map.fixed[static_cast<size_t>(Field::kInvSpeed)][si] = gamma[si];
        map.fixed[static_cast<size_t>(Field::kMotorForce)][si] = fm[si];
        map.fixed[static_cast<size_t>(Field::kBrakeForce)][si] = fb[si];
    }

    double obj_const = 0.0;
    for (int k = 0; k < K; ++k) {
        const double ds = grid.ds_m[static_cast<size_t>(k)];
        a.add_row({{zeta_off + k + 1, sc.zeta}, {zeta_off + k, -sc.zeta}, {dz_off + k, sc.dz}}, 0.0,
                  ConstraintTag::kSocUpdate);
        a.add_row({{om_off + k + 1, sc.omega},
                   {dz_off + k, -sc.dz},
                   {fbatt_off + k, fits.soc.beta * ds * sc.force}},
                  0.0, ConstraintTag::kOmegaLink);
    }
    a.add_row({{zeta_off, sc.zeta}}, batt.soc_init_pct, ConstraintTag::kChargeSustain);
    a.add_row({{zeta_off + S - 1, sc.zeta}, {zeta_off, -sc.zeta}}, 0.0,
              ConstraintTag::kChargeSustain);
    for (int o : {dz_off, fc_off, fbatt_off})
        a.add_row({{o + S - 1, 1.0}}, 0.0, ConstraintTag::kSlotPin);
    a.add_row({{om_off, 1.0}}, 0.0, ConstraintTag::kSlotPin);

    for (int i = 0; i < S; ++i) {
        a.add_slack_row({{zeta_off + i, sc.zeta}}, -1.0, batt.soc_min_pct, ConstraintTag::kBoundSoc);
        a.add_slack_row({{zeta_off + i, sc.zeta}}, 1.0, batt.soc_max_pct, ConstraintTag::kBoundSoc);
    }
    for (int k = 0; k < K; ++k) {
        const double g = gamma[static_cast<size_t>(k)];
        a.add_slack_row({{fc_off + k, sc.force}}, -1.0, params.fuelcell_power_min_w * g,
                        ConstraintTag::kFuelCellPower);
        a.add_slack_row({{fc_off + k, sc.force}}, 1.0, params.fuelcell_power_max_w * g,
                        ConstraintTag::kFuelCellPower);
        a.add_slack_row({{fbatt_off + k, sc.force}}, -1.0, params.battery_power_min_w * g,
                        ConstraintTag::kBatteryPower);
        a.add_slack_row({{fbatt_off + k, sc.force}}, 1.0, params.battery_power_max_w * g,
                        ConstraintTag::kBatteryPower);
        // traction balance with the left side constant
        const double demand = fits.motor.eval(fm[static_cast<size_t>(k)], profile.z[static_cast<size_t>(k)]) +
                              params.aux_power_w * g;
        a.add_slack_row({{fc_off + k, n_fc * sc.force}, {fbatt_off + k, sc.force}}, -1.0, demand,
                        ConstraintTag::kTractionBalance);
        // battery rate cone with gamma constant
        const double kap = fits.soc.alpha * grid.ds_m[static_cast<size_t>(k)] * sc.force * sc.force /
                           (sc.omega * g);
        a.add_soc_block({{{om_off + k + 1, 1.0}},
                         {{fbatt_off + k, 2.0 * std::sqrt(kap)}},
                         {{om_off + k + 1, 1.0}}},
                        {1.0, 0.0, -1.0}, ConstraintTag::kSocRate);
    }
    const double epi = std::max(opts.w_omega * sc.omega * sc.omega, 1e-12);
    for (int i = 0; i < S; ++i) {
        a.add_soc_block({{{t_off + i, epi}},
                         {{om_off + i, 2.0 * std::sqrt(opts.w_omega) * sc.omega}},
                         {{t_off + i, epi}}},
                        {1.0, 0.0, -1.0}, ConstraintTag::kObjectiveEpigraph);
        a.set_objective_term(t_off + i, epi);
    }
    for (int k = 0; k < K; ++k) {
        const double ds = grid.ds_m[static_cast<size_t>(k)];
        a.set_objective_term(fc_off + k, n_fc * fits.fuelcell.p0 * sc.force * ds);
        obj_const += n_fc * fits.fuelcell.p1 * profile.z[static_cast<size_t>(k)] * ds;
    }

    out.program = a.finish(obj_const, S, "ems_given_speed");
    {
        VectorXd g = VectorXd::Zero(out.program.num_vars);
        for (int i = 0; i < S; ++i) {
            const double gm = gamma[static_cast<size_t>(i)];
            g(zeta_off + i) = batt.soc_init_pct / sc.zeta;
            g(om_off + i) = i == 0 ? 0.0 : 0.1;
            g(fc_off + i) =
                0.5 * (params.fuelcell_power_min_w + params.fuelcell_power_max_w) * gm / sc.force;
            g(t_off + i) = 1.0;
        }
        out.program.initial_guess = g;
    }
    out.program.validate();
    map.validate(out.program.num_vars);
    return out;
}

bool audit_coverage(const ConicProgram& program, std::vector<std::string>* missing) {
    auto counts = program.constraint_coverage();
    std::vector<ConstraintTag> expected;
    if (program.formulation == "concurrent")
        expected = {ConstraintTag::kDynamics,       ConstraintTag::kSocUpdate,
                    ConstraintTag::kOmegaLink,      ConstraintTag::kJourneyTime,
                    ConstraintTag::kTerminalSpeed,  ConstraintTag::kChargeSustain,
                    ConstraintTag::kSlotPin,        ConstraintTag::kBoundSpeed,
                    ConstraintTag::kBoundKinetic,   ConstraintTag::kBoundSoc,
                    ConstraintTag::kBoundMotorForce, ConstraintTag::kBoundBrakeForce,
                    ConstraintTag::kMotorPower,     ConstraintTag::kBatteryPower,
                    ConstraintTag::kFuelCellPower,  ConstraintTag::kTractionBalance,
                    ConstraintTag::kSpeedSquare,    ConstraintTag::kSpeedInverse,
                    ConstraintTag::kSocRate,        ConstraintTag::kObjectiveEpigraph};
    else if (program.formulation == "speed_only")
        expected = {ConstraintTag::kDynamics,        ConstraintTag::kJourneyTime,
                    ConstraintTag::kTerminalSpeed,   ConstraintTag::kSlotPin,
                    ConstraintTag::kBoundSpeed,      ConstraintTag::kBoundKinetic,
                    ConstraintTag::kBoundMotorForce, ConstraintTag::kBoundBrakeForce,
                    ConstraintTag::kMotorPower,      ConstraintTag::kSpeedSquare,
                    ConstraintTag::kSpeedInverse,    ConstraintTag::kObjectiveEpigraph};
    else if (program.formulation == "ems_given_speed")
        expected = {ConstraintTag::kSocUpdate,     ConstraintTag::kOmegaLink,
                    ConstraintTag::kChargeSustain, ConstraintTag::kSlotPin,
                    ConstraintTag::kBoundSoc,      ConstraintTag::kBatteryPower,
                    ConstraintTag::kFuelCellPower, ConstraintTag::kTractionBalance,
                    ConstraintTag::kSocRate,       ConstraintTag::kObjectiveEpigraph};
    bool ok = true;
    for (auto t : expected) {
        if (counts[t] == 0) {
            ok = false;
            if (missing) missing->push_back(tag_name(t));
        }
    }
    return ok;
}

}  // namespace hytrain
