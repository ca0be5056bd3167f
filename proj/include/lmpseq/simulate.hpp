#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "lmpseq/model.hpp"
#include "lmpseq/thresholds.hpp"

namespace lmpseq {

/// Minimal stopping rule the path engine runs: either continue while the score
/// stays strictly inside (lower, upper) (stopping on boundary contact), or,
/// when fixed_horizon is nonzero, stop at exactly that stage regardless of
/// the score. Rejection compares z_tau against decision_cut per direction.
struct PathPolicy {
    double lower = 0.0;
    double upper = 0.0;
    double decision_cut = 0.0;
    Direction direction = Direction::GreaterThan;
    std::uint64_t fixed_horizon = 0;
};

PathPolicy path_policy(const TestDesign& design);

struct PathResult {
    double z_tau = 0.0;
    std::uint64_t tau = 0;
    bool reject = false;
    bool capped = false;
};

/// One trajectory. Paths that reach the cap without stopping are accepted
/// (the conservative call) and flagged capped.
PathResult run_one(const PathPolicy& policy, const ObservationModel& model, const Sampler& sampler,
                   Substream& rng, std::uint64_t cap);
PathResult run_one(const TestDesign& design, const ObservationModel& model, double theta, Substream& rng,
                   std::uint64_t cap);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

/// Compensated two-pass mean and sample standard deviation of value(0..n-1).
/// Summation order is fixed by index, independent of thread count.
MeanSd mean_sd(std::uint64_t n, const std::function<double(std::uint64_t)>& value);

struct EstimateOptions {
    std::uint64_t n_rep = 10000;
    std::uint64_t seed = 1;
    std::uint64_t cap = 1000000;
    /// NaN means theta0.
    double theta_sim = std::numeric_limits<double>::quiet_NaN();
    double theta_asn = std::numeric_limits<double>::quiet_NaN();
};

/// Replication-indexed results of one batch. Filled by replication index, so
/// the contents are identical for any thread count or schedule.
struct BatchSlots {
    std::vector<std::uint32_t> tau;
    std::vector<std::uint8_t> reject;
    std::vector<std::uint8_t> capped;
    std::vector<double> z_tau;

    void resize(std::size_t n);
};

/// Replication r consumes Substream(seed, r, lane) and nothing else.
/// OpenMP-parallel; the serial variant is the reference implementation.
void run_batch(const PathPolicy& policy, const ObservationModel& model, double theta, std::uint64_t seed,
               std::uint64_t lane, std::uint64_t n_rep, std::uint64_t cap, BatchSlots& slots);
void run_batch_serial(const PathPolicy& policy, const ObservationModel& model, double theta,
                      std::uint64_t seed, std::uint64_t lane, std::uint64_t n_rep, std::uint64_t cap,
                      BatchSlots& slots);

struct SimulationReport {
    // Design snapshot and run configuration.
    double b = 0.0;
    double c = 0.0;
    double theta_sim = 0.0;
    double theta_asn = 0.0;
    std::uint64_t n_rep = 0;
    std::uint64_t seed = 0;
    std::uint64_t cap = 0;

    double alpha_hat = 0.0;     // rejection frequency on the decision paths
    double se_alpha = 0.0;
    double asn_hat = 0.0;       // mean stopping time on the theta_asn paths
    double se_asn = 0.0;
    double beta_dot_hat = 0.0;  // mean of 1{reject} z_tau, z negated for LessThan
                                // designs (slope toward the design's alternative)
    double se_beta_dot = 0.0;
    double L_hat = 0.0;         // c asn + b alpha - beta_dot at the design's (b,c)
    double se_L = 0.0;
    double capped_fraction = 0.0;
    bool biased = false;        // capped_fraction above 1e-3
};

/// Monte Carlo estimates for a test run at multipliers (b, c). Decision paths
/// are drawn under theta_sim (default theta0, which is what makes alpha_hat
/// and beta_dot_hat the size and the power slope at the null); stopping-time
/// paths are drawn under theta_asn (default theta0), reusing the decision
/// paths when the two measures coincide. Deterministic given (seed, n_rep)
/// for any thread count.
SimulationReport estimate(const PathPolicy& policy, double b, double c, const ObservationModel& model,
                          const EstimateOptions& options);
SimulationReport estimate(const TestDesign& design, const ObservationModel& model,
                          const EstimateOptions& options);

struct PowerPoint {
    double theta = 0.0;
    double power = 0.0;
    double se = 0.0;
};

/// Rejection probability over theta_list with common random numbers across
/// theta values: replication r reuses the same substream at every theta, and
/// every family samples by single-uniform inversion, so the coupling is
/// monotone in theta.
std::vector<PowerPoint> power_curve(const PathPolicy& policy, const ObservationModel& model,
                                    const std::vector<double>& theta_list, const EstimateOptions& options);
std::vector<PowerPoint> power_curve(const TestDesign& design, const ObservationModel& model,
                                    const std::vector<double>& theta_list, const EstimateOptions& options);

struct SlopeEstimate {
    double slope = 0.0;
    double se = 0.0;  // from the paired per-replication differences
    double h = 0.0;
};

/// Central finite-difference power slope at theta0 with CRN pairing. Reported
/// as d/dtheta of the rejection probability, regardless of direction.
SlopeEstimate fd_power_slope(const PathPolicy& policy, const ObservationModel& model, double h,
                             const EstimateOptions& options);
SlopeEstimate fd_power_slope(const TestDesign& design, const ObservationModel& model, double h,
                             const EstimateOptions& options);

} // namespace lmpseq
