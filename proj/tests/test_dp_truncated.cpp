#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "lmpseq/dp_truncated.hpp"
#include "lmpseq/errors.hpp"
#include "lmpseq/model.hpp"
#include "lmpseq/rho_solver.hpp"
#include "lmpseq/thresholds.hpp"

using namespace lmpseq;

namespace {

ObservationModel three_atom() {
    // Centered scores: 0.25 (-1.6) + 0.5 (0.4) + 0.25 (0.8) = 0.
    return ObservationModel::custom_discrete({{-1.0, 0.25, -1.6}, {0.0, 0.5, 0.4}, {1.0, 0.25, 0.8}});
}

StopTable constant_table(std::size_t atom_count, std::size_t horizon, std::uint8_t flag) {
    StopTable table(horizon - 1);
    std::size_t level = 1;
    for (std::size_t n = 1; n < horizon; ++n) {
        level *= atom_count;
        table[n - 1].assign(level, flag);
    }
    return table;
}

} // namespace

TEST_CASE("horizon one is the forced one-shot test") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    const TruncatedPolicy policy = backward_induction(m, 0.0, 0.1, 1);
    // value = c + E g(r) = 0.1 + (-2 + 0) / 2.
    CHECK(policy.value == doctest::Approx(-0.9).epsilon(1e-15));
    CHECK(policy.stop.empty());

    const PolicyEvaluation eval = evaluate_L_truncated(m, policy);
    CHECK(eval.L == doctest::Approx(-0.9).epsilon(1e-15));
    CHECK(eval.asn == 1.0);
    CHECK(eval.alpha == 0.5);
    CHECK(eval.beta_dot == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("the always-stop table prices the one-shot test at any horizon") {
    // Stopping immediately at b = 0 gives L = c - E max(r, 0).
    const ObservationModel bern = ObservationModel::bernoulli_mean(0.5);
    const PolicyEvaluation be =
        evaluate_stop_table(bern, 0.0, 0.07, 3, constant_table(2, 3, 1));
    CHECK(be.L == doctest::Approx(0.07 - 1.0).epsilon(1e-15));
    CHECK(be.asn == 1.0);

    const ObservationModel tri = three_atom();
    const PolicyEvaluation te = evaluate_stop_table(tri, 0.0, 0.07, 3, constant_table(3, 3, 1));
    CHECK(te.L == doctest::Approx(0.07 - 0.4).epsilon(1e-14));
}

TEST_CASE("the all-continue table prices the fixed-horizon test") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    const std::size_t horizon = 4;
    const PolicyEvaluation eval =
        evaluate_stop_table(m, 0.3, 0.1, horizon, constant_table(2, horizon, 0));
    CHECK(eval.asn == doctest::Approx(4.0).epsilon(1e-15));
    // z_4 ~ 4 Binomial(4, 1/2) - 8 in {-8,-4,0,4,8}; reject iff z >= 0.3.
    CHECK(eval.alpha == doctest::Approx(5.0 / 16.0).epsilon(1e-15));
    CHECK(eval.beta_dot == doctest::Approx(4.0 * (4.0 / 16.0) + 8.0 * (1.0 / 16.0)).epsilon(1e-14));
}

TEST_CASE("dynamic program matches the exhaustive scan") {
    const ObservationModel bern = ObservationModel::bernoulli_mean(0.5);
    for (const double b : {0.0, 0.3})
        for (const double c : {0.02, 0.5}) {
            const TruncatedPolicy policy = backward_induction(bern, b, c, 3);
            const BruteForceResult brute = brute_force_min(bern, b, c, 3);
            CHECK(std::fabs(policy.value - brute.value) <= 1e-12);
            // The reported best rule reproduces the reported best value.
            const PolicyEvaluation replay = evaluate_stop_table(bern, b, c, 3, brute.best_stop);
            CHECK(std::fabs(replay.L - brute.value) <= 1e-13);
        }

    const ObservationModel tri = three_atom();
    const TruncatedPolicy policy = backward_induction(tri, 0.1, 0.05, 3);
    const BruteForceResult brute = brute_force_min(tri, 0.1, 0.05, 3);
    CHECK(brute.rules_scanned == 4096);  // 2^(3 + 9) deterministic rules
    CHECK(std::fabs(policy.value - brute.value) <= 1e-12);
}

TEST_CASE("serial and parallel scans agree exactly") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    const BruteForceResult a = brute_force_min(m, 0.3, 0.1, 4);
    const BruteForceResult s = brute_force_min_serial(m, 0.3, 0.1, 4);
    CHECK(a.value == s.value);
    CHECK(a.rules_scanned == s.rules_scanned);
    REQUIRE(a.best_stop.size() == s.best_stop.size());
    for (std::size_t n = 0; n < a.best_stop.size(); ++n) CHECK(a.best_stop[n] == s.best_stop[n]);
}

TEST_CASE("longer horizons never cost more") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t horizon = 1; horizon <= 6; ++horizon) {
        const double value = backward_induction(m, 0.3, 0.1, horizon).value;
        CHECK(value <= prev + 1e-15);
        prev = value;
    }
}

TEST_CASE("tree values equal the point Bellman iterates") {
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    const double b = 0.3, c = 0.1;
    const std::size_t horizon = 4;
    const TruncatedPolicy policy = backward_induction(m, b, c, horizon);
    for (std::size_t n = 1; n <= horizon; ++n)
        for (std::size_t i = 0; i < policy.v[n - 1].size(); ++i) {
            const double expect =
                rho_iterate_point(m, c, policy.z[n - 1][i] - b, horizon - n);
            CHECK(std::fabs(policy.v[n - 1][i] - expect) <= 1e-12);
        }
    // The root adds one forced observation: value = c + E V_1.
    double root = c;
    for (std::size_t j = 0; j < 2; ++j)
        root += m.atoms()[j].p * policy.v[0][j];
    CHECK(policy.value == doctest::Approx(root).epsilon(1e-15));
}

TEST_CASE("exact ties resolve to stopping") {
    // Bernoulli(0.5) at c = 1: continuing from z = 0 costs exactly its payoff.
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    const TruncatedPolicy policy = backward_induction(m, 0.0, 1.0, 3);
    // Level-2 nodes with z = 0 sit at history indices 1 (0 then 1) and 2.
    for (const std::size_t i : {1u, 2u}) {
        CHECK(policy.z[1][i] == 0.0);
        CHECK(policy.continuation[1][i] == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(policy.stop[1][i] == 1);
        CHECK(policy.v[1][i] == 0.0);
    }
}

TEST_CASE("policy evaluation equals its own dynamic program value") {
    const ObservationModel tri = three_atom();
    for (const double c : {0.05, 0.2})
        for (const double b : {-0.2, 0.4}) {
            const TruncatedPolicy policy = backward_induction(tri, b, c, 5);
            const PolicyEvaluation eval = evaluate_L_truncated(tri, policy);
            CHECK(std::fabs(policy.value - eval.L) <= 1e-12);
            // The Lagrange identity assembles L from its components.
            CHECK(eval.L ==
                  doctest::Approx(c * eval.asn + b * eval.alpha - eval.beta_dot).epsilon(1e-12));
        }
}

TEST_CASE("the truncation residual shrinks along the design") {
    // c = 0.5 keeps the continuation region a few lattice steps wide, so the
    // running set is nearly drained by stage 14.
    const ObservationModel m = ObservationModel::bernoulli_mean(0.5);
    const DesignBuild build = make_design_build(m, 0.0, 0.5);
    const std::vector<double> residuals = regularity_sequence(m, build.design, build.rho, 14);
    REQUIRE(residuals.size() == 14);
    for (const double r : residuals) CHECK(r >= -1e-12);
    CHECK(residuals.back() <= residuals.front());
    CHECK(residuals.back() < 0.05);
}

TEST_CASE("capacity and shape guards hold") {
    const ObservationModel bern = ObservationModel::bernoulli_mean(0.5);
    CHECK_THROWS_AS(backward_induction(bern, 0.0, 0.1, 0), ConfigError);
    CHECK_THROWS_AS(backward_induction(bern, 0.0, 0.1, 21), CapacityError);
    CHECK_THROWS_AS(backward_induction(ObservationModel::normal_mean(0.0), 0.0, 0.1, 3),
                    UnsupportedModelError);
    // Poisson support exceeds the 8-atom exact-tree budget.
    CHECK_THROWS_AS(backward_induction(ObservationModel::poisson_mean(1.0), 0.0, 0.1, 3),
                    CapacityError);
    // 2 + 4 + 8 + 16 internal histories exceed the 2^20 rule budget.
    CHECK_THROWS_AS(brute_force_min(bern, 0.0, 0.1, 5), CapacityError);

    StopTable partial = constant_table(2, 4, 1);
    partial[1].pop_back();
    CHECK_THROWS_AS(evaluate_stop_table(bern, 0.0, 0.1, 4, partial), ConfigError);
    CHECK_THROWS_AS(evaluate_stop_table(bern, 0.0, 0.1, 3, constant_table(2, 4, 1)), ConfigError);
}
