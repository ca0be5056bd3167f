#pragma once

#include <limits>

#include "lmpseq/model.hpp"
#include "lmpseq/rho_solver.hpp"

namespace lmpseq {

/// Which tail of the score statistic rejects the null.
enum class Direction { GreaterThan, LessThan };

/// Roots of the stopping-boundary equation g(z) = c + h_c(z) on each side of
/// the origin, in the design's b-relative coordinates.
struct ThresholdResult {
    bool degenerate = false;          // c + h_c(0) > 0: stop after one observation
    double margin = 0.0;              // c + h_c(0)
    double lower_offset = std::numeric_limits<double>::quiet_NaN();  // root at or below 0
    double upper_offset = std::numeric_limits<double>::quiet_NaN();  // root at or above 0
    double residual_lower = 0.0;      // |g - c - h_c| at the lower root
    double residual_upper = 0.0;
    bool tangency_warning = false;    // boundary equation nearly tangent at a root
};

/// A ready-to-run sequential test: continue while z_n stays inside
/// (lower, upper); on stopping, reject iff z_tau >= decision_cut
/// (GreaterThan) or z_tau < decision_cut (LessThan). A degenerate design has
/// an empty continuation interval and always stops at n = 1.
///
/// A LessThan design is solved on the negated score process w = -z, so its
/// offsets live in w coordinates and map back as lower = -b - upper_offset,
/// upper = -b - lower_offset, decision_cut = -b.
struct TestDesign {
    double b = 0.0;
    double c = 0.0;
    Direction direction = Direction::GreaterThan;
    bool degenerate = false;

    // Boundary roots in the solved problem's b-relative coordinates.
    double lower_offset = std::numeric_limits<double>::quiet_NaN();
    double upper_offset = std::numeric_limits<double>::quiet_NaN();
    double lower = 0.0;        // b + lower_offset for GreaterThan (b itself when degenerate)
    double upper = 0.0;        // b + upper_offset for GreaterThan (b itself when degenerate)
    double decision_cut = 0.0; // b for GreaterThan, -b for LessThan

    double residual_lower = 0.0;
    double residual_upper = 0.0;
    bool tangency_warning = false;

    // Solver provenance.
    std::size_t grid_nodes = 0;
    double grid_z_min = 0.0;
    double grid_z_max = 0.0;
    std::size_t iterations = 0;
    double sup_change = 0.0;
    double tail_defect = 0.0;
};

/// Solve the boundary equation on a converged grid by bisection to
/// options.root_tol. Throws NumericError when the grid is unconverged or too
/// narrow to bracket a root.
ThresholdResult solve_thresholds(const RhoGrid& grid, const ObservationModel& model,
                                 const SolverOptions& options = {});

/// Full pipeline output: the design plus the artifacts it was built from.
struct DesignBuild {
    TestDesign design;
    RhoGrid rho;
    ThresholdResult thresholds;
};

/// Run the value iteration and threshold solve for (b, c); throws NumericError
/// if the value iteration did not converge within max_iter. A LessThan
/// request solves the problem for the negated score law (the normal families
/// are symmetric; discrete families get their atom scores negated), and the
/// returned rho grid lives in those w = -z coordinates.
DesignBuild make_design_build(const ObservationModel& model, double b, double c,
                              const SolverOptions& options = {},
                              Direction direction = Direction::GreaterThan);
TestDesign make_design(const ObservationModel& model, double b, double c,
                       const SolverOptions& options = {},
                       Direction direction = Direction::GreaterThan);

/// The same stopping rule with the complemented decision, not a re-solved
/// design for the opposite alternative (build that with the Direction
/// argument of make_design). Under the null the complement has rejection
/// probability 1 - alpha and, since E0 z_tau = 0, the same directed slope.
/// An involution.
TestDesign mirror_design(const TestDesign& design);

} // namespace lmpseq
