#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace hytrain {

// Provenance of a constraint row / cone block, used by the coverage audit.
enum class ConstraintTag : int {
    kDynamics,          // kinetic-energy recursion between samples
    kSocUpdate,         // state-of-charge recursion
    kOmegaLink,         // auxiliary variable definition from soc drop and battery force
    kJourneyTime,       // total journey time equality
    kTerminalSpeed,     // start/end at the stop speed
    kChargeSustain,     // terminal soc equals initial soc
    kDwellPin,          // z pinned to z_stop at station dwell samples
    kSlotPin,           // unused trailing-slot variables pinned to zero
    kSpeedPin,          // fixed speed profile equality (ems-given-speed)
    kBoundSpeed,
    kBoundKinetic,
    kBoundSoc,
    kBoundMotorForce,
    kBoundBrakeForce,
    kMotorPower,        // speed-scaled motor power bounds
    kBatteryPower,
    kFuelCellPower,
    kTractionBalance,   // relaxed electrical traction-balance inequality
    kSpeedSquare,       // relaxed v^2 <= z
    kSpeedInverse,      // relaxed 1 <= v * gamma
    kSocRate,           // relaxed battery quadratic-rate cone
    kObjectiveEpigraph, // quadratic objective terms lifted to cones
    kGeneric,
};

const char* tag_name(ConstraintTag tag);

struct SocBlockSpec {
    int start = 0;  // first variable of the block; variable `start` is the cone head t
    int dim = 0;    // total block size (t plus dim-1 vector entries), >= 2
    ConstraintTag tag = ConstraintTag::kGeneric;
};

// Standard-form conic program:
//   minimize    c'x + c0
//   subject to  A x = b
//               x_j free            for j <  free_count
//               x_j >= 0            for free_count <= j < free_count + nonneg_count
//               (t, u) in SOC       for each block: t >= ||u||_2
// Blocks partition the tail [free_count + nonneg_count, num_vars).
struct ConicProgram {
    int num_vars = 0;
    int free_count = 0;
    int nonneg_count = 0;
    std::vector<SocBlockSpec> soc_blocks;

    Eigen::VectorXd objective;
    double objective_constant = 0;
    // Multiply the solved objective by this to recover model units (the
    // builder normalizes the objective vector to unit max magnitude).
    double objective_unit = 1.0;
    Eigen::SparseMatrix<double> eq_matrix;
    Eigen::VectorXd eq_rhs;

    std::vector<ConstraintTag> row_tags;     // one per equality row
    std::vector<ConstraintTag> nonneg_tags;  // one per orthant variable

    // Optional strictly cone-interior starting hint (size 0 or num_vars).
    Eigen::VectorXd initial_guess;

    // metadata
    int num_grid_samples = 0;
    std::string formulation = "generic";

    int num_rows() const { return static_cast<int>(eq_matrix.rows()); }
    bool is_free(int var) const { return var < free_count; }
    bool is_nonneg(int var) const { return var >= free_count && var < free_count + nonneg_count; }

    // Structural sanity: counts add up, blocks partition the tail, dims >= 2,
    // tag vectors aligned. Throws std::invalid_argument.
    void validate() const;

    // Number of rows plus cone blocks carrying each tag.
    std::map<ConstraintTag, int> constraint_coverage() const;

    // Plain-text dump (triplet matrix plus cone list) for external cross-checks.
    void dump(std::ostream& os) const;
};

// Physical trajectory fields, one slot per grid sample.
enum class Field : int {
    kSpeed = 0,      // v  (m/s)
    kKinetic,        // z  ((m/s)^2)
    kSoc,            // zeta (%)
    kSocDrop,        // delta-zeta over the interval ahead (%)
    kInvSpeed,       // gamma (s/m)
    kOmega,          // auxiliary soc-rate variable (%)
    kMotorForce,     // F_m (N), interval ahead
    kBrakeForce,     // F_brk (N), interval ahead
    kFuelCellForce,  // F_fc per stack (N), interval ahead
    kBatteryForce,   // F_batt (N), interval ahead
};
inline constexpr int kNumFields = 10;
inline constexpr std::array<Field, kNumFields> kAllFields = {
    Field::kSpeed,      Field::kKinetic,    Field::kSoc,           Field::kSocDrop,
    Field::kInvSpeed,   Field::kOmega,      Field::kMotorForce,    Field::kBrakeForce,
    Field::kFuelCellForce, Field::kBatteryForce};

const char* field_name(Field f);

// Bidirectional map between physical trajectory slots and decision-vector
// indices. Slots with index < 0 are not decision variables; their physical
// value is in `fixed`. Decision variables are stored scaled: physical value
// = scale[field] * x[index].
struct VariableMap {
    int num_samples = 0;
    std::array<std::vector<int>, kNumFields> index;
    std::array<std::vector<double>, kNumFields> fixed;
    std::array<double, kNumFields> scale{};

    void resize(int samples);
    int idx(Field f, int i) const { return index[static_cast<size_t>(f)][static_cast<size_t>(i)]; }
    double value(Field f, int i, const Eigen::VectorXd& x) const;

    // Every decision index appears exactly once across all slots and lies in
    // [0, num_vars). Throws std::invalid_argument.
    void validate(int num_vars) const;
};

}  // namespace hytrain
