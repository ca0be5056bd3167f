#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lmpseq/model.hpp"
#include "lmpseq/rho_solver.hpp"
#include "lmpseq/thresholds.hpp"

namespace lmpseq {

/// Stop decisions for every internal history of a horizon-N test, level-major.
/// stop[n-1][i] is the decision after n observations, where i encodes the
/// history as base-(atom count) digits, earliest observation most significant.
/// Level N is omitted: stopping there is forced.
using StopTable = std::vector<std::vector<std::uint8_t>>;

/// Exact horizon-N dynamic program output. All values are normalized by the
/// null density (divided by f0^n), which is what makes them comparable across
/// histories and equal to the n-fold Bellman recursion started from g.
struct TruncatedPolicy {
    double b = 0.0;
    double c = 0.0;
    std::size_t horizon = 0;
    std::size_t atom_count = 0;
    double value = 0.0;  // minimal Lagrange objective among horizon-N tests

    std::vector<std::vector<double>> z;           // score position per history
    std::vector<std::vector<double>> v;           // normalized value per history
    std::vector<std::vector<double>> continuation; // c + E[child value], levels 1..N-1
    StopTable stop;                                // levels 1..N-1
};

/// Exact components of one evaluated stopping rule.
struct PolicyEvaluation {
    double L = 0.0;
    double asn = 0.0;
    double alpha = 0.0;
    double beta_dot = 0.0;
};

/// Backward induction over the full observation tree of a discrete iid family.
/// Ties between stopping and continuing resolve to stopping. Capacity-guarded
/// at 2^22 tree nodes.
TruncatedPolicy backward_induction(const ObservationModel& model, double b, double c, std::size_t horizon);

/// Exact forward evaluation of an arbitrary stop table (validated for shape).
PolicyEvaluation evaluate_stop_table(const ObservationModel& model, double b, double c,
                                     std::size_t horizon, const StopTable& stop);

/// Exact evaluation of the policy's own stop table.
PolicyEvaluation evaluate_L_truncated(const ObservationModel& model, const TruncatedPolicy& policy);

struct BruteForceResult {
    double value = 0.0;
    std::uint64_t rules_scanned = 0;
    StopTable best_stop;
};

/// Exhaustive minimum over every deterministic horizon-N stopping rule.
/// Guarded at 2^20 rules. OpenMP-parallel over the rule space with a
/// deterministic tie-break (smallest rule index wins).
BruteForceResult brute_force_min(const ObservationModel& model, double b, double c, std::size_t horizon);
BruteForceResult brute_force_min_serial(const ObservationModel& model, double b, double c, std::size_t horizon);

/// Truncation-bias diagnostic for a generated design: the expected gap
/// E0[ (g - rho)(z_n - b) ; test still running at stage n ] for n = 1..n_max,
/// computed exactly on the collapsed observation tree. Tends to 0.
std::vector<double> regularity_sequence(const ObservationModel& model, const TestDesign& design,
                                        const RhoGrid& rho, std::size_t n_max);

/// CSV dump with header "history,z,stop,V"; history is the observed values
/// joined by ';' in stage order.
void write_policy_csv(const ObservationModel& model, const TruncatedPolicy& policy, std::ostream& os);

} // namespace lmpseq
