#include "lmpseq/thresholds.hpp"

#include <cmath>

#include "lmpseq/errors.hpp"

namespace lmpseq {
namespace {

// Bisection on [lo, hi] assuming fn(lo) and fn(hi) have opposite signs, with
// the sign of fn(lo) passed in. Narrows the bracket to width root_tol.
template <typename F>
std::pair<double, double> bisect(F&& fn, double lo, double hi, bool lo_negative, double root_tol) {
    while (hi - lo > root_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const bool mid_negative = fn(mid) < 0.0;
        if (mid_negative == lo_negative)
            lo = mid;
        else
            hi = mid;
    }
    return {lo, hi};
}

} // namespace

ThresholdResult solve_thresholds(const RhoGrid& grid, const ObservationModel& model,
                                 const SolverOptions& options) {
    if (!grid.converged)
        throw NumericError("solve_thresholds: the rho grid has not converged; rerun rho_fixed_point");
    if (!(grid.c > 0.0)) throw ConfigError("solve_thresholds: c must be positive");
    if (!(options.root_tol > 0.0)) throw ConfigError("solve_thresholds: root_tol must be positive");

    auto boundary_gap = [&](double z) {
        return g_payoff(z) - grid.c - continuation_value(grid, model, z);
    };

    ThresholdResult result;
    result.margin = grid.c + continuation_value(grid, model, 0.0);
    if (result.margin > 0.0) {
        result.degenerate = true;
        return result;
    }

    const double z_min = grid.z0;
    const double z_max = grid.z_max();
    if (!(boundary_gap(z_min) < 0.0))
        throw NumericError("solve_thresholds: grid range too narrow to bracket the lower boundary");
    if (!(boundary_gap(z_max) < 0.0))
        throw NumericError("solve_thresholds: grid range too narrow to bracket the upper boundary");

    // boundary_gap(0) = -margin >= 0, so each half-line holds one sign change.
    const auto [llo, lhi] = bisect(boundary_gap, z_min, 0.0, true, options.root_tol);
    const auto [ulo, uhi] = bisect(boundary_gap, 0.0, z_max, false, options.root_tol);

    result.lower_offset = 0.5 * (llo + lhi);
    result.upper_offset = 0.5 * (ulo + uhi);
    result.residual_lower = std::fabs(boundary_gap(result.lower_offset));
    result.residual_upper = std::fabs(boundary_gap(result.upper_offset));

    const double lower_slope = (boundary_gap(lhi) - boundary_gap(llo)) / std::max(lhi - llo, 1e-300);
    const double upper_slope = (boundary_gap(uhi) - boundary_gap(ulo)) / std::max(uhi - ulo, 1e-300);
    result.tangency_warning = std::fabs(lower_slope) < 1e-6 || std::fabs(upper_slope) < 1e-6;
    return result;
}

namespace {

// The LessThan problem is the GreaterThan problem for the negated score law.
// The normal families have symmetric score laws already; discrete families
// get their atom scores negated (the result is only used for the solve, never
// for sampling).
ObservationModel negated_score_model(const ObservationModel& model) {
    if (!model.is_discrete()) return model;
    std::vector<Atom> atoms = model.atoms();
    for (Atom& atom : atoms) atom.r = -atom.r;
    return ObservationModel::custom_discrete(std::move(atoms));
}

} // namespace

DesignBuild make_design_build(const ObservationModel& model, double b, double c,
                              const SolverOptions& options, Direction direction) {
    if (!std::isfinite(b)) throw ConfigError("make_design: b must be finite");
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("make_design: c must be positive and finite");

    const bool mirrored = direction == Direction::LessThan;
    const ObservationModel solve_model = mirrored ? negated_score_model(model) : model;

    DesignBuild build;
    build.rho = rho_fixed_point(solve_model, c, options);
    if (!build.rho.converged)
        throw NumericError("make_design: value iteration did not converge within max_iter (last sup change " +
                           std::to_string(build.rho.sup_change) + ")");
    build.thresholds = solve_thresholds(build.rho, solve_model, options);

    TestDesign& d = build.design;
    d.b = b;
    d.c = c;
    d.direction = direction;
    d.degenerate = build.thresholds.degenerate;
    d.decision_cut = mirrored ? -b : b;
    if (d.degenerate) {
        d.lower = d.decision_cut;
        d.upper = d.decision_cut;
    } else {
        d.lower_offset = build.thresholds.lower_offset;
        d.upper_offset = build.thresholds.upper_offset;
        if (mirrored) {
            d.lower = -b - d.upper_offset;
            d.upper = -b - d.lower_offset;
        } else {
            d.lower = b + d.lower_offset;
            d.upper = b + d.upper_offset;
        }
        d.residual_lower = build.thresholds.residual_lower;
        d.residual_upper = build.thresholds.residual_upper;
        d.tangency_warning = build.thresholds.tangency_warning;
    }
    d.grid_nodes = build.rho.size();
    d.grid_z_min = build.rho.z0;
    d.grid_z_max = build.rho.z_max();
    d.iterations = build.rho.iterations;
    d.sup_change = build.rho.sup_change;
    d.tail_defect = build.rho.tail_defect();
    return build;
}

TestDesign make_design(const ObservationModel& model, double b, double c, const SolverOptions& options,
                       Direction direction) {
    return make_design_build(model, b, c, options, direction).design;
}

TestDesign mirror_design(const TestDesign& design) {
    TestDesign m = design;
    m.direction = design.direction == Direction::GreaterThan ? Direction::LessThan : Direction::GreaterThan;
    return m;
}

} // namespace lmpseq
