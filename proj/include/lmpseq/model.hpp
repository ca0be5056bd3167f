#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lmpseq/quadrature.hpp"
#include "lmpseq/rng.hpp"

namespace lmpseq {

enum class FamilyKind {
    BernoulliMean,
    NormalMean,
    PoissonMean,
    TriangularNormal,
    CustomDiscrete,
};

std::string family_name(FamilyKind kind);

/// One support point of a discrete observation law: the observed value x, its
/// null probability p, and the score r assigned to it.
struct Atom {
    double x;
    double p;
    double r;
};

/// Draws observations under a fixed alternative theta, one inversion from a
/// single uniform per observation. Using one uniform per draw is what makes
/// common-random-number coupling across theta values work: the draw is
/// monotone in theta for every family.
class Sampler {
public:
    double draw(std::uint64_t stage, Substream& rng) const;

private:
    friend class ObservationModel;
    FamilyKind kind_;
    double theta_ = 0.0;
    double theta0_ = 0.0;
    std::vector<double> cum_;   // cumulative probabilities, discrete kinds
    std::vector<double> vals_;  // observed values matching cum_
};

/// An observation family pinned at its null parameter theta0, supplying the
/// per-observation score r(x) = d/dtheta log f_theta(x) at theta0 together
/// with exact or quadrature expectations under the null.
///
/// Families:
///   BernoulliMean     x in {0,1},  r(x) = (x - theta0)/(theta0 (1-theta0))
///   NormalMean        x ~ N(theta, 1), r(x) = x - theta0
///   PoissonMean       x in N, r(x) = x/theta0 - 1 (support truncated where
///                     the null tail mass drops below 1e-18, then renormalized)
///   TriangularNormal  stage-indexed x_n ~ N(n theta, 1), r_n(x) = n (x - n theta0)
///   CustomDiscrete    user-supplied (x, p, r) atoms; off-null behavior is the
///                     exponential tilt p_theta(x) ~ p(x) exp((theta-theta0) r(x)),
///                     the canonical family whose score at theta0 is exactly r
class ObservationModel {
public:
    static ObservationModel bernoulli_mean(double theta0);
    static ObservationModel normal_mean(double theta0, std::size_t quadrature_nodes = 64);
    static ObservationModel poisson_mean(double theta0);
    static ObservationModel triangular_normal(double theta0, std::size_t quadrature_nodes = 64);
    static ObservationModel custom_discrete(std::vector<Atom> atoms);

    FamilyKind kind() const { return kind_; }
    double theta0() const { return theta0_; }
    bool is_discrete() const;
    /// True when observations are identically distributed across stages.
    bool is_iid() const { return kind_ != FamilyKind::TriangularNormal; }
    std::size_t quadrature_nodes() const { return quad_nodes_; }

    /// Discrete support; throws UnsupportedModelError for continuous kinds.
    const std::vector<Atom>& atoms() const;

    /// Score of one observation. Throws std::domain_error off the support.
    double score(double x, std::uint64_t stage = 1) const;

    /// Log density / log pmf at an arbitrary theta in the parameter space.
    double log_density(double x, double theta, std::uint64_t stage = 1) const;

    /// Score support as a quadrature rule: nodes are score values, weights are
    /// null probabilities (weights sum to 1). Exact atoms for discrete kinds,
    /// Gauss-Hermite images for normal kinds. Stage matters only for
    /// TriangularNormal, whose stage-n score is n-times the stage-1 score.
    const QuadratureRule& score_rule() const;
    QuadratureRule score_rule_at(std::uint64_t stage) const;

    /// E0[fn(r(X))] for iid kinds: exact atom sum or Gauss-Hermite.
    double expect_under_null(const std::function<double(double)>& fn) const;

    double fisher_info() const;     // E0[r^2] per stage-1 observation
    double mean_abs_score() const;  // E0[|r|]
    double mean_pos_score() const;  // E0[max(r,0)]

    /// Theta validation plus precomputation for repeated sampling at one theta.
    Sampler make_sampler(double theta) const;

    /// Convenience single draw.
    double sample(double theta, std::uint64_t stage, Substream& rng) const;

    std::string describe() const;

private:
    ObservationModel() = default;
    void finalize_discrete();

    FamilyKind kind_ = FamilyKind::NormalMean;
    double theta0_ = 0.0;
    std::size_t quad_nodes_ = 64;
    std::vector<Atom> atoms_;
    QuadratureRule score_rule_;  // stage-1 score support with null weights
};

} // namespace lmpseq
