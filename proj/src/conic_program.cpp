#include "hytrain/conic_program.hpp"

#include <ostream>
#include <stdexcept>

namespace hytrain {

const char* tag_name(ConstraintTag tag) {
    switch (tag) {
        case ConstraintTag::kDynamics: return "dynamics";
        case ConstraintTag::kSocUpdate: return "soc_update";
        case ConstraintTag::kOmegaLink: return "omega_link";
        case ConstraintTag::kJourneyTime: return "journey_time";
        case ConstraintTag::kTerminalSpeed: return "terminal_speed";
        case ConstraintTag::kChargeSustain: return "charge_sustain";
        case ConstraintTag::kDwellPin: return "dwell_pin";
        case ConstraintTag::kSlotPin: return "slot_pin";
        case ConstraintTag::kSpeedPin: return "speed_pin";
        case ConstraintTag::kBoundSpeed: return "bound_speed";
        case ConstraintTag::kBoundKinetic: return "bound_kinetic";
        case ConstraintTag::kBoundSoc: return "bound_soc";
        case ConstraintTag::kBoundMotorForce: return "bound_motor_force";
        case ConstraintTag::kBoundBrakeForce: return "bound_brake_force";
        case ConstraintTag::kMotorPower: return "motor_power";
        case ConstraintTag::kBatteryPower: return "battery_power";
        case ConstraintTag::kFuelCellPower: return "fuelcell_power";
        case ConstraintTag::kTractionBalance: return "traction_balance";
        case ConstraintTag::kSpeedSquare: return "speed_square";
        case ConstraintTag::kSpeedInverse: return "speed_inverse";
        case ConstraintTag::kSocRate: return "soc_rate";
        case ConstraintTag::kObjectiveEpigraph: return "objective_epigraph";
        case ConstraintTag::kGeneric: return "generic";
    }
    return "unknown";
}

const char* field_name(Field f) {
    switch (f) {
        case Field::kSpeed: return "v";
        case Field::kKinetic: return "z";
        case Field::kSoc: return "zeta";
        case Field::kSocDrop: return "delta_zeta";
        case Field::kInvSpeed: return "gamma";
        case Field::kOmega: return "omega";
        case Field::kMotorForce: return "F_m";
        case Field::kBrakeForce: return "F_brk";
        case Field::kFuelCellForce: return "F_fc";
        case Field::kBatteryForce: return "F_batt";
    }
    return "unknown";
}

void ConicProgram::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("conic program: " + m); };
    if (num_vars <= 0) fail("no variables");
    if (free_count < 0 || nonneg_count < 0) fail("negative variable counts");
    int cone_start = free_count + nonneg_count;
    int cursor = cone_start;
    for (const auto& blk : soc_blocks) {
        if (blk.dim < 2) fail("second-order cone block with dimension < 2");
        if (blk.start != cursor) fail("second-order cone blocks must tile the variable tail");
        cursor += blk.dim;
    }
    if (cursor != num_vars) fail("variable categories do not partition the decision vector");
    if (objective.size() != num_vars) fail("objective size mismatch");
    if (eq_matrix.cols() != num_vars) fail("equality matrix column count mismatch");
    if (eq_rhs.size() != eq_matrix.rows()) fail("equality rhs size mismatch");
    if (static_cast<int>(row_tags.size()) != eq_matrix.rows()) fail("row tag count mismatch");
    if (static_cast<int>(nonneg_tags.size()) != nonneg_count) fail("orthant tag count mismatch");
    if (initial_guess.size() != 0 && initial_guess.size() != num_vars)
        fail("initial guess size mismatch");
}

std::map<ConstraintTag, int> ConicProgram::constraint_coverage() const {
    std::map<ConstraintTag, int> counts;
    for (auto t : row_tags) counts[t]++;
    for (auto t : nonneg_tags) counts[t]++;
    for (const auto& blk : soc_blocks) counts[blk.tag]++;
    return counts;
}

void ConicProgram::dump(std::ostream& os) const {
    os << "conic_program v1\n";
    os << "vars " << num_vars << " free " << free_count << " nonneg " << nonneg_count << "\n";
    os << "obj_const " << objective_constant << "\n";
    for (int j = 0; j < num_vars; ++j)
        if (objective(j) != 0.0) os << "obj " << j << " " << objective(j) << "\n";
    for (const auto& blk : soc_blocks)
        os << "soc " << blk.start << " " << blk.dim << " " << tag_name(blk.tag) << "\n";
    os << "rows " << eq_matrix.rows() << "\n";
    for (int k = 0; k < eq_matrix.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(eq_matrix, k); it; ++it)
            os << "a " << it.row() << " " << it.col() << " " << it.value() << "\n";
    for (int r = 0; r < eq_rhs.size(); ++r)
        if (eq_rhs(r) != 0.0) os << "b " << r << " " << eq_rhs(r) << "\n";
    for (size_t r = 0; r < row_tags.size(); ++r)
        os << "rowtag " << r << " " << tag_name(row_tags[r]) << "\n";
}

void VariableMap::resize(int samples) {
    num_samples = samples;
    for (int f = 0; f < kNumFields; ++f) {
        index[static_cast<size_t>(f)].assign(static_cast<size_t>(samples), -1);
        fixed[static_cast<size_t>(f)].assign(static_cast<size_t>(samples), 0.0);
        scale[static_cast<size_t>(f)] = 1.0;
    }
}

double VariableMap::value(Field f, int i, const Eigen::VectorXd& x) const {
    const auto fi = static_cast<size_t>(f);
    const int j = index[fi][static_cast<size_t>(i)];
    if (j < 0) return fixed[fi][static_cast<size_t>(i)];
    return scale[fi] * x(j);
}

void VariableMap::validate(int num_vars) const {
    std::vector<char> seen(static_cast<size_t>(num_vars), 0);
    for (int f = 0; f < kNumFields; ++f) {
        const auto& ix = index[static_cast<size_t>(f)];
        if (static_cast<int>(ix.size()) != num_samples)
            throw std::invalid_argument("variable map: slot array size mismatch");
        for (int j : ix) {
            if (j < 0) continue;
            if (j >= num_vars) throw std::invalid_argument("variable map: index out of range");
            if (seen[static_cast<size_t>(j)])
                throw std::invalid_argument("variable map: decision index mapped twice");
            seen[static_cast<size_t>(j)] = 1;
        }
    }
}

}  // namespace hytrain
