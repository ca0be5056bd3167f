#include "lmpseq/simulate.hpp"

#include <cmath>

#include "lmpseq/errors.hpp"

namespace lmpseq {
namespace {

// Compensated accumulation in fixed replication order: aggregation is
// independent of how the slots were filled.
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

void validate_options(const EstimateOptions& options) {
    if (options.n_rep == 0) throw ConfigError("simulate: n_rep must be at least 1");
    if (options.n_rep > 100'000'000ull) throw CapacityError("simulate: n_rep above 1e8");
    if (options.cap == 0) throw ConfigError("simulate: cap must be at least 1");
    if (options.cap > 1'000'000'000ull) throw CapacityError("simulate: cap above 1e9");
}

double resolve_theta(double requested, const ObservationModel& model) {
    return std::isnan(requested) ? model.theta0() : requested;
}

} // namespace

MeanSd mean_sd(std::uint64_t n, const std::function<double(std::uint64_t)>& value) {
    if (n == 0) return {0.0, 0.0};
    Kahan s;
    for (std::uint64_t i = 0; i < n; ++i) s.add(value(i));
    const double mean = s.sum / static_cast<double>(n);
    if (n < 2) return {mean, 0.0};
    Kahan q;
    for (std::uint64_t i = 0; i < n; ++i) {
        const double d = value(i) - mean;
        q.add(d * d);
    }
    return {mean, std::sqrt(q.sum / static_cast<double>(n - 1))};
}

PathPolicy path_policy(const TestDesign& design) {
    PathPolicy p;
    p.lower = design.lower;
    p.upper = design.upper;
    p.decision_cut = design.decision_cut;
    p.direction = design.direction;
    return p;
}

PathResult run_one(const PathPolicy& policy, const ObservationModel& model, const Sampler& sampler,
                   Substream& rng, std::uint64_t cap) {
    PathResult result;
    double z = 0.0;
    for (std::uint64_t n = 1; n <= cap; ++n) {
        const double x = sampler.draw(n, rng);
        z += model.score(x, n);
        const bool stop = policy.fixed_horizon != 0 ? n == policy.fixed_horizon
                                                    : (z <= policy.lower || z >= policy.upper);
        if (stop) {
            result.z_tau = z;
            result.tau = n;
            result.reject = policy.direction == Direction::GreaterThan ? z >= policy.decision_cut
                                                                       : z < policy.decision_cut;
            return result;
        }
    }
    result.z_tau = z;
    result.tau = cap;
    result.reject = false;
    result.capped = true;
    return result;
}

PathResult run_one(const TestDesign& design, const ObservationModel& model, double theta, Substream& rng,
                   std::uint64_t cap) {
    const Sampler sampler = model.make_sampler(theta);
    return run_one(path_policy(design), model, sampler, rng, cap);
}

void BatchSlots::resize(std::size_t n) {
    tau.assign(n, 0);
    reject.assign(n, 0);
    capped.assign(n, 0);
    z_tau.assign(n, 0.0);
}

void run_batch(const PathPolicy& policy, const ObservationModel& model, double theta, std::uint64_t seed,
               std::uint64_t lane, std::uint64_t n_rep, std::uint64_t cap, BatchSlots& slots) {
    if (policy.fixed_horizon > cap) throw ConfigError("simulate: fixed_horizon exceeds the path cap");
    slots.resize(n_rep);
    const Sampler sampler = model.make_sampler(theta);
    const long long n = static_cast<long long>(n_rep);
#pragma omp parallel for schedule(static)
    for (long long r = 0; r < n; ++r) {
        Substream rng(seed, static_cast<std::uint64_t>(r), lane);
        const PathResult path = run_one(policy, model, sampler, rng, cap);
        const std::size_t i = static_cast<std::size_t>(r);
        slots.tau[i] = static_cast<std::uint32_t>(path.tau);
        slots.reject[i] = path.reject ? 1 : 0;
        slots.capped[i] = path.capped ? 1 : 0;
        slots.z_tau[i] = path.z_tau;
    }
}

void run_batch_serial(const PathPolicy& policy, const ObservationModel& model, double theta,
                      std::uint64_t seed, std::uint64_t lane, std::uint64_t n_rep, std::uint64_t cap,
                      BatchSlots& slots) {
    if (policy.fixed_horizon > cap) throw ConfigError("simulate: fixed_horizon exceeds the path cap");
    slots.resize(n_rep);
    const Sampler sampler = model.make_sampler(theta);
    for (std::uint64_t r = 0; r < n_rep; ++r) {
        Substream rng(seed, r, lane);
        const PathResult path = run_one(policy, model, sampler, rng, cap);
        slots.tau[r] = static_cast<std::uint32_t>(path.tau);
        slots.reject[r] = path.reject ? 1 : 0;
        slots.capped[r] = path.capped ? 1 : 0;
        slots.z_tau[r] = path.z_tau;
    }
}

SimulationReport estimate(const PathPolicy& policy, double b, double c, const ObservationModel& model,
                          const EstimateOptions& options) {
    validate_options(options);
    const double theta_sim = resolve_theta(options.theta_sim, model);
    const double theta_asn = resolve_theta(options.theta_asn, model);
    const std::size_t n = options.n_rep;

    BatchSlots decision;
    run_batch(policy, model, theta_sim, options.seed, 0, options.n_rep, options.cap, decision);

    const BatchSlots* asn_slots = &decision;
    BatchSlots separate_asn;
    const bool same_measure = theta_asn == theta_sim;
    if (!same_measure) {
        run_batch(policy, model, theta_asn, options.seed, 1, options.n_rep, options.cap, separate_asn);
        asn_slots = &separate_asn;
    }

    SimulationReport report;
    report.b = b;
    report.c = c;
    report.theta_sim = theta_sim;
    report.theta_asn = theta_asn;
    report.n_rep = options.n_rep;
    report.seed = options.seed;
    report.cap = options.cap;

    const double root_n = std::sqrt(static_cast<double>(n));
    const MeanSd alpha = mean_sd(n, [&](std::size_t i) { return static_cast<double>(decision.reject[i]); });
    report.alpha_hat = alpha.mean;
    report.se_alpha = alpha.sd / root_n;

    const MeanSd asn = mean_sd(n, [&](std::size_t i) { return static_cast<double>(asn_slots->tau[i]); });
    report.asn_hat = asn.mean;
    report.se_asn = asn.sd / root_n;

    // Slope toward the test's own alternative: negated z for LessThan.
    const double dir = policy.direction == Direction::LessThan ? -1.0 : 1.0;
    const MeanSd beta_dot =
        mean_sd(n, [&](std::size_t i) { return decision.reject[i] ? dir * decision.z_tau[i] : 0.0; });
    report.beta_dot_hat = beta_dot.mean;
    report.se_beta_dot = beta_dot.sd / root_n;

    report.L_hat = c * report.asn_hat + b * report.alpha_hat - report.beta_dot_hat;
    if (same_measure) {
        const MeanSd per_rep_L = mean_sd(n, [&](std::size_t i) {
            const double decision_part = decision.reject[i] ? b - dir * decision.z_tau[i] : 0.0;
            return c * static_cast<double>(decision.tau[i]) + decision_part;
        });
        report.se_L = per_rep_L.sd / root_n;
    } else {
        // Independent passes: the stopping-time term carries no covariance
        // with the decision terms.
        const MeanSd decision_part = mean_sd(n, [&](std::size_t i) {
            return decision.reject[i] ? b - dir * decision.z_tau[i] : 0.0;
        });
        const double se_dec = decision_part.sd / root_n;
        report.se_L = std::sqrt(c * c * report.se_asn * report.se_asn + se_dec * se_dec);
    }

    std::uint64_t capped = 0;
    for (std::size_t i = 0; i < n; ++i) capped += decision.capped[i];
    std::uint64_t total = options.n_rep;
    if (!same_measure) {
        for (std::size_t i = 0; i < n; ++i) capped += separate_asn.capped[i];
        total *= 2;
    }
    report.capped_fraction = static_cast<double>(capped) / static_cast<double>(total);
    report.biased = report.capped_fraction > 1e-3;
    return report;
}

SimulationReport estimate(const TestDesign& design, const ObservationModel& model,
                          const EstimateOptions& options) {
    return estimate(path_policy(design), design.b, design.c, model, options);
}

std::vector<PowerPoint> power_curve(const PathPolicy& policy, const ObservationModel& model,
                                    const std::vector<double>& theta_list, const EstimateOptions& options) {
    validate_options(options);
    if (theta_list.empty()) throw ConfigError("power_curve: theta_list must not be empty");
    std::vector<PowerPoint> points;
    points.reserve(theta_list.size());
    BatchSlots slots;
    const double root_n = std::sqrt(static_cast<double>(options.n_rep));
    for (double theta : theta_list) {
        run_batch(policy, model, theta, options.seed, 0, options.n_rep, options.cap, slots);
        const MeanSd p =
            mean_sd(options.n_rep, [&](std::size_t i) { return static_cast<double>(slots.reject[i]); });
        points.push_back({theta, p.mean, p.sd / root_n});
    }
    return points;
}

std::vector<PowerPoint> power_curve(const TestDesign& design, const ObservationModel& model,
                                    const std::vector<double>& theta_list, const EstimateOptions& options) {
    return power_curve(path_policy(design), model, theta_list, options);
}

SlopeEstimate fd_power_slope(const PathPolicy& policy, const ObservationModel& model, double h,
                             const EstimateOptions& options) {
    validate_options(options);
    if (!(h > 0.0)) throw ConfigError("fd_power_slope: h must be positive");
    const double theta0 = model.theta0();
    BatchSlots up, down;
    run_batch(policy, model, theta0 + h, options.seed, 0, options.n_rep, options.cap, up);
    run_batch(policy, model, theta0 - h, options.seed, 0, options.n_rep, options.cap, down);
    const MeanSd diff = mean_sd(options.n_rep, [&](std::size_t i) {
        return static_cast<double>(up.reject[i]) - static_cast<double>(down.reject[i]);
    });
    SlopeEstimate slope;
    slope.h = h;
    slope.slope = diff.mean / (2.0 * h);
    slope.se = diff.sd / (2.0 * h * std::sqrt(static_cast<double>(options.n_rep)));
    return slope;
}

SlopeEstimate fd_power_slope(const TestDesign& design, const ObservationModel& model, double h,
                             const EstimateOptions& options) {
    return fd_power_slope(path_policy(design), model, h, options);
}

} // namespace lmpseq
