#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lmpseq/model.hpp"
#include "lmpseq/simulate.hpp"
#include "lmpseq/thresholds.hpp"

namespace lmpseq {

/// The penalized objective L = c*ASN + b*alpha - beta_dot and the pieces it
/// was assembled from.
struct ObjectiveRecord {
    double L = 0.0;
    double se = 0.0;
    double asn = 0.0;
    double alpha = 0.0;
    double beta_dot = 0.0;
    double b = 0.0;
    double c = 0.0;
    std::string exactness;
};

ObjectiveRecord objective(double b, double c, double asn, double alpha, double beta_dot);
ObjectiveRecord objective(const SimulationReport& report);

/// L of the fixed-sample test "observe N stages, reject iff z_N >= b" for the
/// stage-scaled normal family: z_N ~ N(0, sigma_N^2) with
/// sigma_N^2 = sum_{n<=N} n^2, so
///   L = c*N + b*Phi(-b/sigma_N) - sigma_N * phi(b/sigma_N).
double closed_form_L_triangular(std::uint64_t horizon, double b, double c);

/// L of the same fixed-sample test computed without using the distribution of
/// z_N: exact score-walk convolution for discrete families, and a backward
/// value recursion over per-stage quadrature for the normal families. Useful
/// as an independent cross-check of closed forms.
double fixed_sample_L(const ObservationModel& model, std::uint64_t horizon, double b, double c);

/// L of the fixed-sample test for every horizon 1..n_max, computed
/// incrementally (one convolution sweep for discrete families; the exact
/// normal tail integral per horizon for the normal families).
std::vector<double> fixed_sample_L_sequence(const ObservationModel& model, std::uint64_t n_max, double b,
                                            double c);

enum class FinitenessVerdict { FiniteSoFar, DivergenceDetected };

/// Sweep of L over fixed-sample horizons. The verdict reflects the swept
/// horizon only: divergence is declared when the sweep ends below the floor
/// L(1) - 10*c*sqrt(n_max) and is still descending at the end.
struct FinitenessProbe {
    FinitenessVerdict verdict = FinitenessVerdict::FiniteSoFar;
    std::uint64_t detected_at = 0; // first horizon below the floor; 0 when none
    std::uint64_t argmin = 1;      // first horizon attaining the smallest L
    double min_L = 0.0;
    double floor = 0.0;
    std::vector<double> values; // L at horizons 1..n_max
};

FinitenessProbe finiteness_probe(const ObservationModel& model, double b, double c,
                                 std::uint64_t n_max = 500);

/// Smallest support point t of z_N with P(z_N >= t) <= alpha, so the test
/// "reject iff z_N >= cut" has size achieved_alpha <= alpha and no smaller cut
/// does. Exact; discrete families only. When even the top atom exceeds alpha
/// the cut sits above the support and achieved_alpha is 0.
struct FixedSampleCut {
    double cut = 0.0;
    double achieved_alpha = 0.0;
};

FixedSampleCut fixed_sample_cut(const ObservationModel& model, std::uint64_t horizon, double alpha);

/// A rival test to rank against a base design under the base (b, c).
struct Competitor {
    std::string label;
    PathPolicy policy;
};

/// Stopping boundaries moved by the given shifts; the decision cut stays at
/// the base b (the pointwise-optimal decision for any stopping rule).
Competitor shifted_competitor(const TestDesign& base, double lower_shift, double upper_shift,
                              std::string label = "");

/// Fixed-sample test with an alpha-matched cut.
Competitor fixed_sample_competitor(const ObservationModel& model, std::uint64_t horizon, double alpha,
                                   std::string label = "");

struct ComparisonOptions {
    std::uint64_t n_rep = 200000;
    std::uint64_t seed = 1;
    std::uint64_t cap = 1000000;
    /// A competitor spending no more than the base, ASN <= base + asn_tol and
    /// alpha <= base + alpha_tol, is additionally required not to beat the
    /// base power slope.
    double asn_tol = 0.1;
    double alpha_tol = 0.01;
};

struct ComparisonRow {
    std::string label;
    double asn = 0.0;
    double alpha = 0.0;
    double beta_dot = 0.0;
    double L = 0.0;
    double se_L = 0.0;
    /// Paired replication-by-replication L difference, competitor minus base.
    double gap_mean = 0.0;
    double gap_se = 0.0;
    double capped_fraction = 0.0;
    bool matched = false;
    bool L_ok = true;
    bool slope_ok = true;
    std::string verdict;
};

struct ComparisonReport {
    double b = 0.0;
    double c = 0.0;
    ComparisonRow base;
    std::vector<ComparisonRow> rows;
    bool all_ok = true;
};

/// All tests run under the null with common random numbers: replication r of
/// every policy consumes Substream(seed, r, 0), so the L gaps are paired and
/// their standard errors reflect the difference, not two independent runs.
/// A competitor passes when its paired mean gap is >= -3 gap standard errors,
/// and, if it spends no more than the base on both ASN and alpha, when its
/// beta_dot does not exceed the base by more than 3 paired standard errors.
ComparisonReport compare_designs(const ObservationModel& model, const TestDesign& base,
                                 const std::vector<Competitor>& competitors,
                                 const ComparisonOptions& options = {});

/// CSV dump with header "design_id,asn,alpha,beta_dot,L,se_L,verdict"; base
/// row first, competitors in input order.
void write_ordering_csv(const ComparisonReport& report, std::ostream& os);

} // namespace lmpseq
