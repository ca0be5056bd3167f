#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "lmpseq/dp_truncated.hpp"
#include "lmpseq/errors.hpp"
#include "lmpseq/lagrange_verify.hpp"
#include "lmpseq/model.hpp"
#include "lmpseq/rng.hpp"
#include "lmpseq/simulate.hpp"
#include "lmpseq/thresholds.hpp"

using namespace lmpseq;

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) * 0.3989422804014327; }

} // namespace

TEST_CASE("closed-form objective hits hand anchors") {
    // L = c N + b Phi(-b/sigma_N) - sigma_N phi(b/sigma_N), sigma_N^2 = sum n^2.
    CHECK(closed_form_L_triangular(1, 0.0, 1.0) ==
          doctest::Approx(1.0 - 0.3989422804014327).epsilon(1e-14));
    const double s2 = std::sqrt(5.0);
    CHECK(closed_form_L_triangular(2, 0.0, 1.0) ==
          doctest::Approx(2.0 - s2 * 0.3989422804014327).epsilon(1e-14));
    const double expected = 0.5 + normal_cdf(-1.0) - normal_pdf(1.0);
    CHECK(closed_form_L_triangular(1, 1.0, 0.5) == doctest::Approx(expected).epsilon(1e-13));
    // Reflecting b changes L by exactly b.
    for (const std::uint64_t n : {1ull, 4ull, 9ull})
        CHECK(closed_form_L_triangular(n, 1.0, 0.2) - closed_form_L_triangular(n, -1.0, 0.2) ==
              doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("quadrature pipeline matches the closed form") {
    const ObservationModel m = ObservationModel::triangular_normal(0.0);
    for (const std::uint64_t n : {1ull, 3ull, 7ull})
        for (const double b : {-1.0, 0.5})
            CHECK(fixed_sample_L(m, n, b, 0.1) ==
                  doctest::Approx(closed_form_L_triangular(n, b, 0.1)).epsilon(1e-8));
}

TEST_CASE("iid normal fixed-sample objective matches its hinge formula") {
    const ObservationModel m = ObservationModel::normal_mean(0.0);
    const double b = 0.7, c = 0.2;
    const std::uint64_t n = 4;
    const double sigma = 2.0;
    const double expected = c * 4.0 + b * normal_cdf(-b / sigma) - sigma * normal_pdf(b / sigma);
    CHECK(fixed_sample_L(m, n, b, c) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("discrete fixed-sample objective is exact") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    // z_3 in {-6,-2,2,6} with weights {1,3,3,1}/8; L = 3c + E g(z - b).
    const double expected = 0.3 + (3.0 * -1.7 + 1.0 * -5.7) / 8.0;
    CHECK(fixed_sample_L(m, 3, 0.3, 0.1) == doctest::Approx(expected).epsilon(1e-14));

    // The exact tree evaluation of the all-continue rule agrees.
    StopTable all_continue(2);
    all_continue[0].assign(2, 0);
    all_continue[1].assign(4, 0);
    const PolicyEvaluation eval = evaluate_stop_table(m, 0.3, 0.1, 3, all_continue);
    CHECK(eval.L == doctest::Approx(fixed_sample_L(m, 3, 0.3, 0.1)).epsilon(1e-13));
}

TEST_CASE("objective sequences agree with single evaluations") {
    const ObservationModel bern = ObservationModel::bernoulli_mean(0.5);
    const std::vector<double> seq = fixed_sample_L_sequence(bern, 6, 0.2, 0.05);
    REQUIRE(seq.size() == 6);
    for (std::uint64_t n = 1; n <= 6; ++n)
        CHECK(seq[n - 1] == doctest::Approx(fixed_sample_L(bern, n, 0.2, 0.05)).epsilon(1e-12));

    const ObservationModel tri = ObservationModel::triangular_normal(0.0);
    const std::vector<double> tseq = fixed_sample_L_sequence(tri, 5, -0.5, 0.3);
    for (std::uint64_t n = 1; n <= 5; ++n)
        CHECK(tseq[n - 1] == doctest::Approx(closed_form_L_triangular(n, -0.5, 0.3)).epsilon(1e-8));
}

TEST_CASE("the finiteness probe flags free fall and settles on finite problems") {
    const FinitenessProbe diverging =
        finiteness_probe(ObservationModel::triangular_normal(0.0), 0.0, 0.01, 500);
    CHECK(diverging.verdict == FinitenessVerdict::DivergenceDetected);
    CHECK(diverging.detected_at > 0);
    CHECK(diverging.detected_at <= 500);
    CHECK(diverging.argmin == 500);

    const FinitenessProbe finite =
        finiteness_probe(ObservationModel::bernoulli_mean(0.5), 0.0, 0.5, 200);
    CHECK(finite.verdict == FinitenessVerdict::FiniteSoFar);
    CHECK(finite.detected_at == 0);
    CHECK(finite.argmin < 10);

    // The verdict is horizon-relative by design: an iid normal problem with a
    // tiny cost is still in free fall at n = 300 (its true minimum sits near
    // n = 40000), and the probe reports what the swept horizon shows.
    const FinitenessProbe early =
        finiteness_probe(ObservationModel::normal_mean(0.0), 0.0, 0.001, 300);
    CHECK(early.verdict == FinitenessVerdict::DivergenceDetected);
}

TEST_CASE("objective records carry the Lagrange identity and provenance") {
    const ObjectiveRecord exact = objective(0.2, 0.05, 10.0, 0.4, 1.5);
    CHECK(exact.L == doctest::Approx(0.05 * 10.0 + 0.2 * 0.4 - 1.5).epsilon(1e-15));
    CHECK(exact.exactness == "exact");
    CHECK(exact.se == 0.0);

    SimulationReport r;
    r.b = 0.2;
    r.c = 0.05;
    r.asn_hat = 10.0;
    r.alpha_hat = 0.4;
    r.beta_dot_hat = 1.5;
    r.L_hat = 0.05 * 10.0 + 0.2 * 0.4 - 1.5;
    r.se_L = 0.01;
    const ObjectiveRecord mc = objective(r);
    CHECK(mc.exactness == "monte_carlo");
    CHECK(mc.L == r.L_hat);
    CHECK(mc.se == 0.01);
}

TEST_CASE("alpha-matched cuts walk the exact null distribution") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    // z_2 in {-4, 0, 4} with probabilities {1/4, 1/2, 1/4}.
    const FixedSampleCut at_quarter = fixed_sample_cut(m, 2, 0.3);
    CHECK(at_quarter.cut == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(at_quarter.achieved_alpha == doctest::Approx(0.25).epsilon(1e-15));

    const FixedSampleCut exact_quarter = fixed_sample_cut(m, 2, 0.25);
    CHECK(exact_quarter.cut == doctest::Approx(4.0).epsilon(1e-15));

    const FixedSampleCut tiny = fixed_sample_cut(m, 2, 0.1);
    CHECK(tiny.cut > 4.0);  // above the support: never rejects
    CHECK(tiny.achieved_alpha == 0.0);

    const FixedSampleCut everything = fixed_sample_cut(m, 2, 1.0);
    CHECK(everything.cut == doctest::Approx(-4.0).epsilon(1e-15));
    CHECK(everything.achieved_alpha == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(fixed_sample_cut(ObservationModel::normal_mean(0.0), 2, 0.5),
                    UnsupportedModelError);
}

TEST_CASE("competitor constructors perturb only what they claim") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    const TestDesign base = make_design(m, 0.2, 0.05);

    const Competitor widened = shifted_competitor(base, -2.0, 2.0);
    CHECK(widened.policy.lower == doctest::Approx(base.lower - 2.0).epsilon(1e-15));
    CHECK(widened.policy.upper == doctest::Approx(base.upper + 2.0).epsilon(1e-15));
    CHECK(widened.policy.decision_cut == base.decision_cut);
    CHECK(widened.policy.fixed_horizon == 0);
    CHECK(!widened.label.empty());
    CHECK(widened.label.find(',') == std::string::npos);

    const Competitor fixed = fixed_sample_competitor(m, 5, 0.4);
    CHECK(fixed.policy.fixed_horizon == 5);
    CHECK(std::isinf(fixed.policy.lower));
    CHECK(std::isinf(fixed.policy.upper));
    CHECK(fixed.label.find(',') == std::string::npos);

    CHECK_THROWS_AS(shifted_competitor(base, std::numeric_limits<double>::quiet_NaN(), 0.0),
                    ConfigError);
}

TEST_CASE("the generated design survives a paired comparison") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    const TestDesign base = make_design(m, 0.2, 0.05);

    std::vector<Competitor> competitors;
    // Lattice-visible boundary perturbations and alpha-matched fixed tests.
    competitors.push_back(shifted_competitor(base, -2.0, 2.0, "widen_2"));
    competitors.push_back(shifted_competitor(base, 2.0, -2.0, "narrow_2"));
    competitors.push_back(shifted_competitor(base, 4.0, 4.0, "translate_up_4"));
    competitors.push_back(fixed_sample_competitor(m, 2, 0.5, "fixed_n2"));

    ComparisonOptions options;
    options.n_rep = 30000;
    options.seed = 3;
    const ComparisonReport report = compare_designs(m, base, competitors, options);
    CHECK(report.all_ok);
    CHECK(report.base.verdict == "base");
    REQUIRE(report.rows.size() == 4);
    for (const ComparisonRow& row : report.rows) {
        CHECK(row.L_ok);
        CHECK(row.slope_ok);
    }
    // The fixed-sample test is far from optimal here: its gap is decisive.
    const ComparisonRow& fixed_row = report.rows.back();
    CHECK(fixed_row.gap_mean > 10.0 * fixed_row.gap_se);

    CHECK_THROWS_AS(
        compare_designs(m, make_design(m, 0.2, 0.05, {}, Direction::LessThan), competitors, options),
        ConfigError);
}

TEST_CASE("ordering csv has the documented shape") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    const TestDesign base = make_design(m, 0.2, 0.05);
    ComparisonOptions options;
    options.n_rep = 5000;
    const ComparisonReport report =
        compare_designs(m, base, {shifted_competitor(base, -2.0, 2.0)}, options);

    std::ostringstream os;
    write_ordering_csv(report, os);
    std::istringstream is(os.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "design_id,asn,alpha,beta_dot,L,se_L,verdict");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 6);
    }
    CHECK(rows == 2);  // base + one competitor
}

TEST_CASE("pipeline inputs are validated") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    CHECK_THROWS_AS(fixed_sample_L(m, 0, 0.0, 0.1), ConfigError);
    CHECK_THROWS_AS(fixed_sample_L(m, 3, 0.0, -0.1), ConfigError);
    CHECK_THROWS_AS(finiteness_probe(m, 0.0, 0.1, 1), ConfigError);
    CHECK_THROWS_AS(fixed_sample_cut(m, 2, 1.5), ConfigError);
}
