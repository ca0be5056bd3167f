#include "lmpseq/rho_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "lmpseq/errors.hpp"

namespace lmpseq {
namespace {

// Per-shift lookup precomputation: on a uniform grid the fractional position
// of z_k + r is independent of k, so each shift reduces to one integer offset
// and one fixed interpolation weight.
struct ShiftTable {
    std::vector<long long> offset;
    std::vector<double> frac;
    std::vector<double> weight;
};

ShiftTable make_shift_table(const RhoGrid& grid, const QuadratureRule& rule) {
    ShiftTable t;
    const std::size_t m = rule.size();
    t.offset.resize(m);
    t.frac.resize(m);
    t.weight.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double s = rule.nodes[i] / grid.h;
        const double fl = std::floor(s);
        t.offset[i] = static_cast<long long>(fl);
        t.frac[i] = s - fl;
        t.weight[i] = rule.weights[i];
    }
    return t;
}

// Interpolated lookup of node k shifted by table entry i, with tail rules.
inline double shifted_value(const std::vector<double>& v, long long n, double h, long long k,
                            const ShiftTable& t, std::size_t i) {
    const long long idx = k + t.offset[i];
    const double f = t.frac[i];
    if (idx < 0) return 0.0;  // left tail: rho is identically 0
    if (idx >= n - 1) {
        // right tail: continue the final node with slope -1
        const double overshoot = (static_cast<double>(idx - (n - 1)) + f) * h;
        return v[static_cast<std::size_t>(n - 1)] - overshoot;
    }
    const std::size_t j = static_cast<std::size_t>(idx);
    return v[j] * (1.0 - f) + v[j + 1] * f;
}

void validate_grid(const RhoGrid& grid) {
    if (grid.size() < 8) throw ConfigError("rho grid: at least 8 nodes are required");
    if (!(grid.h > 0.0) || !std::isfinite(grid.h) || !std::isfinite(grid.z0))
        throw ConfigError("rho grid: invalid geometry");
    if (!(grid.c >= 0.0) || !std::isfinite(grid.c))
        throw ConfigError("rho grid: the per-stage cost c must be nonnegative and finite");
}

} // namespace

double RhoGrid::value_at(double z) const {
    if (z < z0) return 0.0;
    const double pos = (z - z0) / h;
    const double last = static_cast<double>(values.size() - 1);
    if (pos >= last) return values.back() - (z - z_max());
    const std::size_t idx = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(idx);
    return values[idx] * (1.0 - f) + values[idx + 1] * f;
}

double RhoGrid::tail_defect() const {
    return std::max(std::fabs(values.front()), std::fabs(values.back() + z_max()));
}

RhoGrid make_initial_grid(const ObservationModel& model, double c, const SolverOptions& options) {
    if (!model.is_iid())
        throw UnsupportedModelError("rho solver: stage-indexed families have no stationary recursion");
    if (!(c >= 0.0) || !std::isfinite(c)) throw ConfigError("rho solver: c must be nonnegative and finite");
    if (options.grid_nodes < 8) throw ConfigError("rho solver: grid_nodes must be at least 8");

    double z_min = options.z_min;
    double z_max = options.z_max;
    const double sigma = std::sqrt(model.fisher_info());
    if (std::isnan(z_min)) z_min = -30.0 * sigma;
    if (std::isnan(z_max)) z_max = 30.0 * sigma;
    if (!(z_min < 0.0 && z_max > 0.0))
        throw ConfigError("rho solver: the grid must straddle 0 (z_min < 0 < z_max)");

    RhoGrid grid;
    grid.c = c;
    grid.z0 = z_min;
    grid.h = (z_max - z_min) / static_cast<double>(options.grid_nodes - 1);
    grid.values.resize(options.grid_nodes);
    for (std::size_t k = 0; k < options.grid_nodes; ++k) grid.values[k] = g_payoff(grid.node(k));
    grid.iterations = 0;
    grid.converged = false;
    return grid;
}

RhoGrid rho_step(const RhoGrid& in, const ObservationModel& model) {
    validate_grid(in);
    const QuadratureRule& rule = model.score_rule();
    const ShiftTable table = make_shift_table(in, rule);
    RhoGrid out = in;
    const long long n = static_cast<long long>(in.size());
    const std::size_t m = rule.size();
    const std::vector<double>& v = in.values;

#pragma omp parallel for schedule(static)
    for (long long k = 0; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += table.weight[i] * shifted_value(v, n, in.h, k, table, i);
        const double z = in.z0 + static_cast<double>(k) * in.h;
        out.values[static_cast<std::size_t>(k)] = std::min(g_payoff(z), in.c + acc);
    }
    return out;
}

RhoGrid rho_step_serial(const RhoGrid& in, const ObservationModel& model) {
    validate_grid(in);
    const QuadratureRule& rule = model.score_rule();
    RhoGrid out = in;
    for (std::size_t k = 0; k < in.size(); ++k) {
        const double z = in.node(k);
        double acc = 0.0;
        for (std::size_t i = 0; i < rule.size(); ++i)
            acc += rule.weights[i] * in.value_at(z + rule.nodes[i]);
        out.values[k] = std::min(g_payoff(z), in.c + acc);
    }
    return out;
}

RhoGrid rho_fixed_point(const ObservationModel& model, double c, const SolverOptions& options) {
    if (!(options.tol > 0.0)) throw ConfigError("rho solver: tol must be positive");
    if (options.max_iter == 0) throw ConfigError("rho solver: max_iter must be positive");
    RhoGrid cur = make_initial_grid(model, c, options);
    const QuadratureRule& rule = model.score_rule();
    const ShiftTable table = make_shift_table(cur, rule);
    std::vector<double> next(cur.size());
    const long long n = static_cast<long long>(cur.size());
    const std::size_t m = rule.size();

    for (std::size_t iter = 1; iter <= options.max_iter; ++iter) {
        const std::vector<double>& v = cur.values;
        double sup = 0.0;
#pragma omp parallel for schedule(static) reduction(max : sup)
        for (long long k = 0; k < n; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += table.weight[i] * shifted_value(v, n, cur.h, k, table, i);
            const double z = cur.z0 + static_cast<double>(k) * cur.h;
            const double updated = std::min(g_payoff(z), c + acc);
            const double delta = std::fabs(updated - v[static_cast<std::size_t>(k)]);
            if (delta > sup) sup = delta;
            next[static_cast<std::size_t>(k)] = updated;
        }
        cur.values.swap(next);
        cur.iterations = iter;
        cur.sup_change = sup;
        if (sup < options.tol) {
            cur.converged = true;
            break;
        }
    }
    return cur;
}

double continuation_value(const RhoGrid& grid, const ObservationModel& model, double z) {
    if (!grid.converged)
        throw NumericError("continuation_value: the rho grid has not converged; rerun rho_fixed_point");
    const QuadratureRule& rule = model.score_rule();
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) acc += rule.weights[i] * grid.value_at(z + rule.nodes[i]);
    return acc;
}

double rho_iterate_point(const ObservationModel& model, double c, double z, std::size_t n) {
    if (!model.is_iid() || !model.is_discrete())
        throw UnsupportedModelError("rho_iterate_point: exact recursion requires a discrete iid family");
    const std::vector<Atom>& atoms = model.atoms();
    if (n > 64 || std::pow(static_cast<double>(atoms.size()), static_cast<double>(n)) > 1e8)
        throw CapacityError("rho_iterate_point: atom tree too large");
    if (n == 0) return g_payoff(z);
    double acc = 0.0;
    for (const Atom& a : atoms) acc += a.p * rho_iterate_point(model, c, z + a.r, n - 1);
    return std::min(g_payoff(z), c + acc);
}

std::vector<std::string> shape_violations(const RhoGrid& grid, double tol) {
    std::vector<std::string> out;
    const std::size_t n = grid.size();
    char buf[160];
    auto report = [&](const char* what, std::size_t k, double excess) {
        std::snprintf(buf, sizeof buf, "%s violated at node %zu (z=%.6g) by %.3g", what, k, grid.node(k), excess);
        out.emplace_back(buf);
    };

    const double at_zero = grid.value_at(0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double z = grid.node(k);
        const double v = grid.values[k];
        if (v > tol) report("non-positivity", k, v);
        if (k + 1 < n) {
            const double vn = grid.values[k + 1];
            if (vn > v + tol) report("monotone non-increase", k, vn - v);
            const double drift = (v + z) - (vn + grid.node(k + 1));
            if (drift > tol) report("monotone non-decrease of rho+z", k, drift);
        }
        if (k + 2 < n) {
            const double mid = 0.5 * (v + grid.values[k + 2]);
            if (mid > grid.values[k + 1] + tol) report("midpoint concavity", k + 1, mid - grid.values[k + 1]);
        }
        const double gap = g_payoff(z) - v;
        if (gap < -tol) report("g-envelope lower bound", k, -gap);
        if (gap > -at_zero + tol) report("g-envelope upper bound", k, gap + at_zero);
    }
    if (std::fabs(grid.values.front()) > tol) report("left tail limit", 0, std::fabs(grid.values.front()));
    if (std::fabs(grid.values.back() + grid.z_max()) > tol)
        report("right tail limit", n - 1, std::fabs(grid.values.back() + grid.z_max()));
    return out;
}

void write_grid_csv(const RhoGrid& grid, std::ostream& os) {
    os << "z,rho,g_minus_rho\n";
    char line[128];
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double z = grid.node(k);
        const double v = grid.values[k];
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", z, v, g_payoff(z) - v);
        os << line;
    }
}

} // namespace lmpseq
