#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "lmpseq/model.hpp"

namespace lmpseq {

/// Normalized one-step stopping payoff: g(z) = min(0, -z).
inline double g_payoff(double z) { return z > 0.0 ? -z : 0.0; }

/// Grid, tolerance, and iteration controls shared by the value iteration and
/// the threshold root finder.
struct SolverOptions {
    /// Grid range; NaN means auto: +/- 30 null standard deviations of the score.
    double z_min = std::numeric_limits<double>::quiet_NaN();
    double z_max = std::numeric_limits<double>::quiet_NaN();
    std::size_t grid_nodes = 2001;
    double tol = 1e-9;          // sup-norm convergence threshold per sweep
    std::size_t max_iter = 100000;
    double root_tol = 1e-10;    // bisection bracket width for thresholds
    double tail_tol = 1e-7;     // accepted deviation from the analytic tails
};

/// The candidate value function on a uniform z-grid, together with iteration
/// provenance. Off-grid evaluation is linear interpolation inside the grid and
/// the analytic tails outside: 0 to the left, a unit-slope descent matching
/// the last node to the right. Both tails are exact once the grid covers the
/// continuation region, because the value function equals g there.
struct RhoGrid {
    double c = 0.0;
    double z0 = 0.0;      // first node
    double h = 0.0;       // node spacing
    std::vector<double> values;
    std::size_t iterations = 0;
    bool converged = false;
    double sup_change = std::numeric_limits<double>::infinity();

    std::size_t size() const { return values.size(); }
    double node(std::size_t k) const { return z0 + static_cast<double>(k) * h; }
    double z_max() const { return node(values.size() - 1); }

    /// Interpolated evaluation with tail rules.
    double value_at(double z) const;

    /// Largest deviation of the boundary nodes from the analytic tails.
    double tail_defect() const;
};

/// Grid initialized to g at every node. Auto range covers +/- 30 score
/// standard deviations. Requires an iid family and at least 8 nodes.
RhoGrid make_initial_grid(const ObservationModel& model, double c, const SolverOptions& options = {});

/// One Bellman sweep: out(z) = min(g(z), c + E0[in(z + r)]) at every node.
/// OpenMP-parallel over nodes; deterministic for any thread count.
RhoGrid rho_step(const RhoGrid& in, const ObservationModel& model);

/// Straightforward single-threaded reference for the same sweep, kept for
/// differential testing and benchmarking against the tuned kernel.
RhoGrid rho_step_serial(const RhoGrid& in, const ObservationModel& model);

/// Iterate rho_step from g until the sup-norm change per sweep drops below
/// options.tol or max_iter sweeps have run; converged is recorded, never thrown.
RhoGrid rho_fixed_point(const ObservationModel& model, double c, const SolverOptions& options = {});

/// Continuation integrand h_c(z) = E0[rho(z + r)] on a converged grid.
double continuation_value(const RhoGrid& grid, const ObservationModel& model, double z);

/// n-fold Bellman recursion evaluated exactly at one point by atom-tree
/// expansion (discrete iid families only); independent of any grid.
double rho_iterate_point(const ObservationModel& model, double c, double z, std::size_t n);

/// Structural checks at every node: non-positivity, monotonicity of rho and
/// rho + z, midpoint concavity, the g-envelope bound
/// 0 <= g - rho <= -rho(0), and both tail limits. Returns human-readable
/// violation messages; empty means all hold within tol.
std::vector<std::string> shape_violations(const RhoGrid& grid, double tol);

/// CSV dump with header "z,rho,g_minus_rho".
void write_grid_csv(const RhoGrid& grid, std::ostream& os);

} // namespace lmpseq
