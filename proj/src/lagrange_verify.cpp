#include "lmpseq/lagrange_verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <utility>

#include "lmpseq/errors.hpp"
#include "lmpseq/quadrature.hpp"
#include "lmpseq/rho_solver.hpp"
#include "lmpseq/rng.hpp"

namespace lmpseq {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;
// Support points closer than this are the same sum up to roundoff; true
// distinct sums of O(1) scores sit far above it.
constexpr double kMergeTol = 1e-10;

struct Kahan {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

using Pmf = std::vector<std::pair<double, double>>; // (z, probability), sorted by z

// One more observation: pmf of z_{n+1} from pmf of z_n. Sorted output;
// bit-noise twins are merged at their mass-weighted midpoint.
void convolve_step(Pmf& pmf, const std::vector<Atom>& atoms) {
    Pmf next;
    next.reserve(pmf.size() * atoms.size());
    for (const auto& [z, p] : pmf)
        for (const Atom& atom : atoms) next.emplace_back(z + atom.r, p * atom.p);
    std::sort(next.begin(), next.end());
    Pmf merged;
    merged.reserve(next.size());
    for (const auto& [z, p] : next) {
        if (!merged.empty() && z - merged.back().first <= kMergeTol) {
            auto& [mz, mp] = merged.back();
            mz = (mz * mp + z * p) / (mp + p);
            mp += p;
        } else {
            merged.emplace_back(z, p);
        }
    }
    if (merged.size() > 2'000'000)
        throw CapacityError("fixed-sample convolution: support grew past 2e6 points");
    pmf = std::move(merged);
}

double expected_g(const Pmf& pmf, double b) {
    Kahan s;
    for (const auto& [z, p] : pmf) s.add(p * g_payoff(z - b));
    return s.sum;
}

double stage_scale(const ObservationModel& model, std::uint64_t stage) {
    return model.kind() == FamilyKind::TriangularNormal ? static_cast<double>(stage) : 1.0;
}

// E (z - b)^- for z ~ N(0, sigma^2): the decision terms of the fixed-sample
// objective, b*alpha - beta_dot = E g(z - b).
double normal_hinge(double sigma, double b) {
    const double t = b / sigma;
    return b * normal_cdf(-t) - sigma * kInvSqrt2Pi * std::exp(-0.5 * t * t);
}

// E (a + s*xi)^+ for xi ~ N(0,1), by unit-width panels of 16-node
// Gauss-Legendre on the exact positivity range. Uses only exp, so it is an
// evaluation independent of the normal cdf.
double positive_part_integral(double a, double s) {
    const double m = -a / s;
    if (m >= 12.0) return 0.0; // positive part carries no mass this far out
    if (m <= -12.0) return a;  // negative part carries no mass this far out
    static const QuadratureRule gl = gauss_legendre(16);
    const double hi = std::max(m, 0.0) + 14.0;
    const int panels = static_cast<int>(std::ceil(hi - m));
    const double width = (hi - m) / panels;
    Kahan total;
    for (int p = 0; p < panels; ++p) {
        const double mid = m + (p + 0.5) * width;
        const double half = 0.5 * width;
        double panel = 0.0;
        for (std::size_t j = 0; j < gl.size(); ++j) {
            const double t = mid + half * gl.nodes[j];
            panel += gl.weights[j] * (a + s * t) * kInvSqrt2Pi * std::exp(-0.5 * t * t);
        }
        total.add(half * panel);
    }
    return total.sum;
}

// Four-point Lagrange interpolation of tabulated stage values on a uniform
// grid, with the exact asymptotes outside it: 0 far left, b - z far right.
double stage_value(const std::vector<double>& v, double z0, double h, double b, double z) {
    const double t = (z - z0) / h;
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(v.size());
    if (t <= 0.0) return 0.0;
    if (t >= static_cast<double>(n - 1)) return b - z;
    std::ptrdiff_t i = static_cast<std::ptrdiff_t>(t) - 1;
    if (i < 0) i = 0;
    if (i > n - 4) i = n - 4;
    const double s = t - static_cast<double>(i);
    const double s0 = s, s1 = s - 1.0, s2 = s - 2.0, s3 = s - 3.0;
    const double w0 = -(s1 * s2 * s3) / 6.0;
    const double w1 = (s0 * s2 * s3) / 2.0;
    const double w2 = -(s0 * s1 * s3) / 2.0;
    const double w3 = (s0 * s1 * s2) / 6.0;
    return w0 * v[i] + w1 * v[i + 1] + w2 * v[i + 2] + w3 * v[i + 3];
}

void validate_lagrange_args(std::uint64_t horizon, double b, double c) {
    if (horizon == 0) throw ConfigError("fixed-sample objective: horizon must be at least 1");
    if (horizon > 10'000'000ull) throw CapacityError("fixed-sample objective: horizon above 1e7");
    if (!std::isfinite(b)) throw ConfigError("fixed-sample objective: b must be finite");
    if (!std::isfinite(c) || c < 0.0)
        throw ConfigError("fixed-sample objective: c must be finite and non-negative");
}

double discrete_fixed_sample_L(const ObservationModel& model, std::uint64_t horizon, double b, double c) {
    const std::vector<Atom>& atoms = model.atoms();
    Pmf pmf{{0.0, 1.0}};
    std::uint64_t work = 0;
    for (std::uint64_t n = 0; n < horizon; ++n) {
        work += pmf.size() * atoms.size();
        if (work > 10'000'000'000ull)
            throw CapacityError("fixed-sample convolution: work bound exceeded");
        convolve_step(pmf, atoms);
    }
    return c * static_cast<double>(horizon) + expected_g(pmf, b);
}

// Backward value recursion for the normal families. Stage values live on a
// uniform grid wide enough that the asymptotes hold to well below 1e-9 at
// both edges; the innermost stage is evaluated by exact kink-split panels and
// every outer stage by a 64-node normal-expectation rule over the
// interpolated table.
double normal_fixed_sample_L(const ObservationModel& model, std::uint64_t horizon, double b, double c) {
    const auto n_stages = static_cast<std::size_t>(horizon);
    double var_total = 0.0;
    for (std::size_t n = 1; n <= n_stages; ++n) {
        const double s = stage_scale(model, n);
        var_total += s * s;
    }
    const double sigma_total = std::sqrt(var_total);
    if (horizon == 1) return c - positive_part_integral(-b, stage_scale(model, 1));

    const double h = 0.02;
    const double half_width = std::fabs(b) + 7.5 * sigma_total + 4.0;
    const auto side = static_cast<std::size_t>(std::ceil(half_width / h));
    const std::size_t count = 2 * side + 1;
    if (count > 2'000'000) throw CapacityError("fixed-sample objective: value grid above 2e6 nodes");
    const double z0 = b - static_cast<double>(side) * h;

    std::vector<double> cur(count), next(count);
    const double s_last = stage_scale(model, n_stages);
    const auto node_count = static_cast<long long>(count);
#pragma omp parallel for schedule(static)
    for (long long k = 0; k < node_count; ++k) {
        const double z = z0 + static_cast<double>(k) * h;
        cur[static_cast<std::size_t>(k)] = -positive_part_integral(z - b, s_last);
    }

    static const QuadratureRule gh = gauss_hermite_normal(64);
    for (std::size_t n = n_stages - 1; n >= 2; --n) {
        const double s = stage_scale(model, n);
#pragma omp parallel for schedule(static)
        for (long long k = 0; k < node_count; ++k) {
            const double z = z0 + static_cast<double>(k) * h;
            double acc = 0.0;
            for (std::size_t j = 0; j < gh.size(); ++j)
                acc += gh.weights[j] * stage_value(cur, z0, h, b, z + s * gh.nodes[j]);
            next[static_cast<std::size_t>(k)] = acc;
        }
        cur.swap(next);
    }

    const double s1 = stage_scale(model, 1);
    Kahan root;
    for (std::size_t j = 0; j < gh.size(); ++j)
        root.add(gh.weights[j] * stage_value(cur, z0, h, b, s1 * gh.nodes[j]));
    return c * static_cast<double>(horizon) + root.sum;
}

std::string default_shift_label(double lower_shift, double upper_shift) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "shift(%+g;%+g)", lower_shift, upper_shift);
    return buf;
}

std::string default_fixed_label(std::uint64_t horizon, double alpha) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "fixed(n=%llu;alpha=%g)",
                  static_cast<unsigned long long>(horizon), alpha);
    return buf;
}

ComparisonRow row_from_slots(const std::string& label, const BatchSlots& slots, std::uint64_t n_rep,
                             double b, double c) {
    const double root_n = std::sqrt(static_cast<double>(n_rep));
    ComparisonRow row;
    row.label = label;
    const MeanSd asn = mean_sd(n_rep, [&](std::uint64_t i) { return static_cast<double>(slots.tau[i]); });
    row.asn = asn.mean;
    const MeanSd alpha =
        mean_sd(n_rep, [&](std::uint64_t i) { return static_cast<double>(slots.reject[i]); });
    row.alpha = alpha.mean;
    const MeanSd beta_dot =
        mean_sd(n_rep, [&](std::uint64_t i) { return slots.reject[i] ? slots.z_tau[i] : 0.0; });
    row.beta_dot = beta_dot.mean;
    const MeanSd per_rep_L = mean_sd(n_rep, [&](std::uint64_t i) {
        const double decision_part = slots.reject[i] ? b - slots.z_tau[i] : 0.0;
        return c * static_cast<double>(slots.tau[i]) + decision_part;
    });
    row.L = per_rep_L.mean;
    row.se_L = per_rep_L.sd / root_n;
    std::uint64_t capped = 0;
    for (std::uint64_t i = 0; i < n_rep; ++i) capped += slots.capped[i];
    row.capped_fraction = static_cast<double>(capped) / static_cast<double>(n_rep);
    return row;
}

} // namespace

ObjectiveRecord objective(double b, double c, double asn, double alpha, double beta_dot) {
    ObjectiveRecord record;
    record.b = b;
    record.c = c;
    record.asn = asn;
    record.alpha = alpha;
    record.beta_dot = beta_dot;
    record.L = c * asn + b * alpha - beta_dot;
    record.se = 0.0;
    record.exactness = "exact";
    return record;
}

ObjectiveRecord objective(const SimulationReport& report) {
    ObjectiveRecord record;
    record.b = report.b;
    record.c = report.c;
    record.asn = report.asn_hat;
    record.alpha = report.alpha_hat;
    record.beta_dot = report.beta_dot_hat;
    record.L = report.L_hat;
    record.se = report.se_L;
    record.exactness = "monte_carlo";
    return record;
}

double closed_form_L_triangular(std::uint64_t horizon, double b, double c) {
    validate_lagrange_args(horizon, b, c);
    const double n = static_cast<double>(horizon);
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 6.0;
    return c * n + normal_hinge(std::sqrt(var), b);
}

double fixed_sample_L(const ObservationModel& model, std::uint64_t horizon, double b, double c) {
    validate_lagrange_args(horizon, b, c);
    if (model.is_discrete()) return discrete_fixed_sample_L(model, horizon, b, c);
    return normal_fixed_sample_L(model, horizon, b, c);
}

std::vector<double> fixed_sample_L_sequence(const ObservationModel& model, std::uint64_t n_max, double b,
                                            double c) {
    validate_lagrange_args(n_max, b, c);
    if (n_max > 100'000ull) throw CapacityError("fixed-sample sweep: n_max above 1e5");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n_max));
    if (model.is_discrete()) {
        const std::vector<Atom>& atoms = model.atoms();
        Pmf pmf{{0.0, 1.0}};
        std::uint64_t work = 0;
        for (std::uint64_t n = 1; n <= n_max; ++n) {
            work += pmf.size() * atoms.size();
            if (work > 10'000'000'000ull)
                throw CapacityError("fixed-sample sweep: convolution work bound exceeded");
            convolve_step(pmf, atoms);
            values.push_back(c * static_cast<double>(n) + expected_g(pmf, b));
        }
    } else {
        double var = 0.0;
        for (std::uint64_t n = 1; n <= n_max; ++n) {
            const double s = stage_scale(model, n);
            var += s * s;
            values.push_back(c * static_cast<double>(n) + normal_hinge(std::sqrt(var), b));
        }
    }
    return values;
}

FinitenessProbe finiteness_probe(const ObservationModel& model, double b, double c, std::uint64_t n_max) {
    if (n_max < 2) throw ConfigError("finiteness probe: n_max must be at least 2");
    FinitenessProbe probe;
    probe.values = fixed_sample_L_sequence(model, n_max, b, c);
    probe.floor = probe.values.front() - 10.0 * c * std::sqrt(static_cast<double>(n_max));
    probe.min_L = probe.values.front();
    probe.argmin = 1;
    for (std::uint64_t n = 2; n <= n_max; ++n) {
        const double L = probe.values[static_cast<std::size_t>(n - 1)];
        if (L < probe.min_L) {
            probe.min_L = L;
            probe.argmin = n;
        }
        if (probe.detected_at == 0 && L < probe.floor) probe.detected_at = n;
    }
    const bool still_descending = probe.argmin == n_max;
    if (still_descending && probe.values.back() < probe.floor)
        probe.verdict = FinitenessVerdict::DivergenceDetected;
    else
        probe.detected_at = 0;
    return probe;
}

FixedSampleCut fixed_sample_cut(const ObservationModel& model, std::uint64_t horizon, double alpha) {
    if (!model.is_discrete())
        throw UnsupportedModelError("fixed-sample cut calibration needs a discrete family");
    if (horizon == 0) throw ConfigError("fixed-sample cut: horizon must be at least 1");
    if (horizon > 100'000ull) throw CapacityError("fixed-sample cut: horizon above 1e5");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("fixed-sample cut: alpha must be in [0, 1]");

    const std::vector<Atom>& atoms = model.atoms();
    Pmf pmf{{0.0, 1.0}};
    std::uint64_t work = 0;
    for (std::uint64_t n = 0; n < horizon; ++n) {
        work += pmf.size() * atoms.size();
        if (work > 10'000'000'000ull)
            throw CapacityError("fixed-sample cut: convolution work bound exceeded");
        convolve_step(pmf, atoms);
    }

    const double slack = alpha * (1.0 + 1e-12) + 1e-15;
    Kahan tail;
    std::size_t k = pmf.size();
    while (k > 0 && tail.sum + pmf[k - 1].second <= slack) {
        tail.add(pmf[k - 1].second);
        --k;
    }
    if (k == pmf.size()) return {pmf.back().first + 1.0, 0.0};
    return {pmf[k].first, tail.sum};
}

Competitor shifted_competitor(const TestDesign& base, double lower_shift, double upper_shift,
                              std::string label) {
    if (!std::isfinite(lower_shift) || !std::isfinite(upper_shift))
        throw ConfigError("shifted competitor: shifts must be finite");
    Competitor comp;
    comp.policy = path_policy(base);
    comp.policy.lower = base.lower + lower_shift;
    comp.policy.upper = base.upper + upper_shift;
    comp.label = label.empty() ? default_shift_label(lower_shift, upper_shift) : std::move(label);
    return comp;
}

Competitor fixed_sample_competitor(const ObservationModel& model, std::uint64_t horizon, double alpha,
                                   std::string label) {
    Competitor comp;
    comp.policy.lower = -std::numeric_limits<double>::infinity();
    comp.policy.upper = std::numeric_limits<double>::infinity();
    comp.policy.direction = Direction::GreaterThan;
    comp.policy.fixed_horizon = horizon;
    comp.policy.decision_cut = fixed_sample_cut(model, horizon, alpha).cut;
    comp.label = label.empty() ? default_fixed_label(horizon, alpha) : std::move(label);
    return comp;
}

ComparisonReport compare_designs(const ObservationModel& model, const TestDesign& base,
                                 const std::vector<Competitor>& competitors,
                                 const ComparisonOptions& options) {
    if (options.n_rep < 2) throw ConfigError("design comparison: n_rep must be at least 2");
    if (options.n_rep > 100'000'000ull) throw CapacityError("design comparison: n_rep above 1e8");
    if (options.cap == 0) throw ConfigError("design comparison: cap must be at least 1");
    if (base.direction != Direction::GreaterThan)
        throw ConfigError("design comparison: greater_than designs only");

    ComparisonReport report;
    report.b = base.b;
    report.c = base.c;
    const double b = base.b;
    const double c = base.c;
    const double theta0 = model.theta0();
    const std::uint64_t n = options.n_rep;
    const double root_n = std::sqrt(static_cast<double>(n));

    BatchSlots base_slots;
    run_batch(path_policy(base), model, theta0, options.seed, 0, n, options.cap, base_slots);
    const auto per_rep_L = [b, c](const BatchSlots& slots, std::uint64_t i) {
        const double decision_part = slots.reject[i] ? b - slots.z_tau[i] : 0.0;
        return c * static_cast<double>(slots.tau[i]) + decision_part;
    };

    report.base = row_from_slots("base", base_slots, n, b, c);
    report.base.matched = true;
    report.base.verdict = "base";

    BatchSlots comp_slots;
    for (const Competitor& comp : competitors) {
        run_batch(comp.policy, model, theta0, options.seed, 0, n, options.cap, comp_slots);
        ComparisonRow row = row_from_slots(comp.label, comp_slots, n, b, c);

        const MeanSd gap = mean_sd(
            n, [&](std::uint64_t i) { return per_rep_L(comp_slots, i) - per_rep_L(base_slots, i); });
        row.gap_mean = gap.mean;
        row.gap_se = gap.sd / root_n;
        row.L_ok = row.gap_mean >= -3.0 * row.gap_se;

        row.matched = row.asn <= report.base.asn + options.asn_tol &&
                      row.alpha <= report.base.alpha + options.alpha_tol;
        if (row.matched) {
            const MeanSd slope_gap = mean_sd(n, [&](std::uint64_t i) {
                const double base_term = base_slots.reject[i] ? base_slots.z_tau[i] : 0.0;
                const double comp_term = comp_slots.reject[i] ? comp_slots.z_tau[i] : 0.0;
                return base_term - comp_term;
            });
            row.slope_ok = slope_gap.mean >= -3.0 * slope_gap.sd / root_n;
        }

        if (!row.L_ok)
            row.verdict = "objective_below_base";
        else if (!row.slope_ok)
            row.verdict = "slope_above_base";
        else
            row.verdict = "consistent";
        report.all_ok = report.all_ok && row.L_ok && row.slope_ok;
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_ordering_csv(const ComparisonReport& report, std::ostream& os) {
    os << "design_id,asn,alpha,beta_dot,L,se_L,verdict\n";
    const auto write_row = [&os](const ComparisonRow& row) {
        std::string label = row.label;
        std::replace(label.begin(), label.end(), ',', ';');
        char buf[192];
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g,", row.asn, row.alpha,
                      row.beta_dot, row.L, row.se_L);
        os << label << buf << row.verdict << '\n';
    };
    write_row(report.base);
    for (const ComparisonRow& row : report.rows) write_row(row);
}

} // namespace lmpseq
