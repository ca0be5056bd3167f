#include "lmpseq/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "lmpseq/errors.hpp"

namespace lmpseq {
namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log sqrt(2 pi)

bool is_nonneg_integer(double x) { return x >= 0.0 && std::floor(x) == x && std::isfinite(x); }

} // namespace

std::string family_name(FamilyKind kind) {
    switch (kind) {
        case FamilyKind::BernoulliMean: return "bernoulli";
        case FamilyKind::NormalMean: return "normal";
        case FamilyKind::PoissonMean: return "poisson";
        case FamilyKind::TriangularNormal: return "triangular_normal";
        case FamilyKind::CustomDiscrete: return "custom";
    }
    return "unknown";
}

void ObservationModel::finalize_discrete() {
    if (atoms_.empty()) throw ConfigError("model: discrete family needs at least one atom");
    double mass = 0.0;
    for (const Atom& a : atoms_) {
        if (!std::isfinite(a.x) || !std::isfinite(a.p) || !std::isfinite(a.r))
            throw ConfigError("model: atom fields must be finite");
        if (a.p < 0.0) throw ConfigError("model: atom probability must be nonnegative");
        mass += a.p;
    }
    if (std::fabs(mass - 1.0) > 1e-12)
        throw ConfigError("model: atom probabilities must sum to 1 within 1e-12");
    double score_mean = 0.0, score_sq = 0.0;
    for (const Atom& a : atoms_) {
        score_mean += a.p * a.r;
        score_sq += a.p * a.r * a.r;
    }
    if (std::fabs(score_mean) > 1e-9)
        throw ConfigError("model: atom scores must have zero null mean within 1e-9");
    if (score_sq <= 0.0) throw ConfigError("model: atom scores must carry positive variance");
    score_rule_.nodes.clear();
    score_rule_.weights.clear();
    for (const Atom& a : atoms_) {
        score_rule_.nodes.push_back(a.r);
        score_rule_.weights.push_back(a.p);
    }
}

ObservationModel ObservationModel::bernoulli_mean(double theta0) {
    if (!(theta0 > 0.0 && theta0 < 1.0))
        throw ConfigError("model: bernoulli theta0 must lie in (0,1)");
    ObservationModel m;
    m.kind_ = FamilyKind::BernoulliMean;
    m.theta0_ = theta0;
    m.atoms_ = {
        {0.0, 1.0 - theta0, -1.0 / (1.0 - theta0)},
        {1.0, theta0, 1.0 / theta0},
    };
    m.finalize_discrete();
    return m;
}

ObservationModel ObservationModel::normal_mean(double theta0, std::size_t quadrature_nodes) {
    if (!std::isfinite(theta0)) throw ConfigError("model: normal theta0 must be finite");
    ObservationModel m;
    m.kind_ = FamilyKind::NormalMean;
    m.theta0_ = theta0;
    m.quad_nodes_ = quadrature_nodes;
    m.score_rule_ = gauss_hermite_normal(quadrature_nodes);  // r = x - theta0 ~ N(0,1)
    return m;
}

ObservationModel ObservationModel::poisson_mean(double theta0) {
    if (!(theta0 > 0.0) || !std::isfinite(theta0))
        throw ConfigError("model: poisson theta0 must be positive and finite");
    if (theta0 > 64.0) throw ConfigError("model: poisson theta0 above 64 is not supported");
    ObservationModel m;
    m.kind_ = FamilyKind::PoissonMean;
    m.theta0_ = theta0;
    // Truncate where the remaining tail is below 1e-18, then renormalize.
    double p = std::exp(-theta0);
    double cum = 0.0;
    for (int x = 0; x < 4096; ++x) {
        m.atoms_.push_back({static_cast<double>(x), p, static_cast<double>(x) / theta0 - 1.0});
        cum += p;
        if (1.0 - cum < 1e-18 && x > theta0 + 10.0 * std::sqrt(theta0)) break;
        p *= theta0 / (x + 1.0);
    }
    for (Atom& a : m.atoms_) a.p /= cum;
    m.finalize_discrete();
    return m;
}

ObservationModel ObservationModel::triangular_normal(double theta0, std::size_t quadrature_nodes) {
    if (!std::isfinite(theta0)) throw ConfigError("model: triangular_normal theta0 must be finite");
    ObservationModel m;
    m.kind_ = FamilyKind::TriangularNormal;
    m.theta0_ = theta0;
    m.quad_nodes_ = quadrature_nodes;
    m.score_rule_ = gauss_hermite_normal(quadrature_nodes);  // stage-1 score: x - theta0 ~ N(0,1)
    return m;
}

ObservationModel ObservationModel::custom_discrete(std::vector<Atom> atoms) {
    ObservationModel m;
    m.kind_ = FamilyKind::CustomDiscrete;
    m.theta0_ = 0.0;
    m.atoms_ = std::move(atoms);
    if (m.atoms_.size() > 4096) throw CapacityError("model: custom support above 4096 atoms");
    m.finalize_discrete();
    return m;
}

bool ObservationModel::is_discrete() const {
    return kind_ == FamilyKind::BernoulliMean || kind_ == FamilyKind::PoissonMean ||
           kind_ == FamilyKind::CustomDiscrete;
}

const std::vector<Atom>& ObservationModel::atoms() const {
    if (!is_discrete()) throw UnsupportedModelError("model: atoms() requires a discrete family");
    return atoms_;
}

double ObservationModel::score(double x, std::uint64_t stage) const {
    if (stage == 0) throw std::domain_error("model: stage index starts at 1");
    switch (kind_) {
        case FamilyKind::BernoulliMean:
            if (x != 0.0 && x != 1.0) throw std::domain_error("model: bernoulli observation must be 0 or 1");
            return (x - theta0_) / (theta0_ * (1.0 - theta0_));
        case FamilyKind::NormalMean:
            if (!std::isfinite(x)) throw std::domain_error("model: normal observation must be finite");
            return x - theta0_;
        case FamilyKind::PoissonMean:
            if (!is_nonneg_integer(x)) throw std::domain_error("model: poisson observation must be a nonnegative integer");
            return x / theta0_ - 1.0;
        case FamilyKind::TriangularNormal:
            if (!std::isfinite(x)) throw std::domain_error("model: observation must be finite");
            return static_cast<double>(stage) * (x - static_cast<double>(stage) * theta0_);
        case FamilyKind::CustomDiscrete:
            for (const Atom& a : atoms_)
                if (x == a.x) return a.r;
            throw std::domain_error("model: observation is not a support atom");
    }
    throw std::logic_error("model: unreachable");
}

double ObservationModel::log_density(double x, double theta, std::uint64_t stage) const {
    if (stage == 0) throw std::domain_error("model: stage index starts at 1");
    switch (kind_) {
        case FamilyKind::BernoulliMean: {
            if (!(theta > 0.0 && theta < 1.0)) throw std::domain_error("model: bernoulli theta must lie in (0,1)");
            if (x != 0.0 && x != 1.0) throw std::domain_error("model: bernoulli observation must be 0 or 1");
            return x * std::log(theta) + (1.0 - x) * std::log(1.0 - theta);
        }
        case FamilyKind::NormalMean: {
            const double d = x - theta;
            return -0.5 * d * d - kLogSqrt2Pi;
        }
        case FamilyKind::PoissonMean: {
            if (!(theta > 0.0)) throw std::domain_error("model: poisson theta must be positive");
            if (!is_nonneg_integer(x)) throw std::domain_error("model: poisson observation must be a nonnegative integer");
            return -theta + x * std::log(theta) - std::lgamma(x + 1.0);
        }
        case FamilyKind::TriangularNormal: {
            const double d = x - static_cast<double>(stage) * theta;
            return -0.5 * d * d - kLogSqrt2Pi;
        }
        case FamilyKind::CustomDiscrete: {
            double z = 0.0;
            double px = -1.0;
            for (const Atom& a : atoms_) {
                const double w = a.p * std::exp((theta - theta0_) * a.r);
                z += w;
                if (x == a.x) px = w;
            }
            if (px < 0.0) throw std::domain_error("model: observation is not a support atom");
            return std::log(px) - std::log(z);
        }
    }
    throw std::logic_error("model: unreachable");
}

const QuadratureRule& ObservationModel::score_rule() const {
    if (!is_iid()) throw UnsupportedModelError("model: stage-free score rule requires an iid family");
    return score_rule_;
}

QuadratureRule ObservationModel::score_rule_at(std::uint64_t stage) const {
    if (stage == 0) throw std::domain_error("model: stage index starts at 1");
    QuadratureRule rule = score_rule_;
    if (kind_ == FamilyKind::TriangularNormal && stage != 1) {
        for (double& r : rule.nodes) r *= static_cast<double>(stage);
    }
    return rule;
}

double ObservationModel::expect_under_null(const std::function<double(double)>& fn) const {
    const QuadratureRule& rule = score_rule();
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) acc += rule.weights[i] * fn(rule.nodes[i]);
    return acc;
}

double ObservationModel::fisher_info() const {
    const QuadratureRule& rule = kind_ == FamilyKind::TriangularNormal ? score_rule_ : score_rule();
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) acc += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
    return acc;
}

double ObservationModel::mean_abs_score() const {
    const QuadratureRule& rule = kind_ == FamilyKind::TriangularNormal ? score_rule_ : score_rule();
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) acc += rule.weights[i] * std::fabs(rule.nodes[i]);
    return acc;
}

double ObservationModel::mean_pos_score() const {
    const QuadratureRule& rule = kind_ == FamilyKind::TriangularNormal ? score_rule_ : score_rule();
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i)
        if (rule.nodes[i] > 0.0) acc += rule.weights[i] * rule.nodes[i];
    return acc;
}

Sampler ObservationModel::make_sampler(double theta) const {
    if (!std::isfinite(theta)) throw std::domain_error("model: theta must be finite");
    Sampler s;
    s.kind_ = kind_;
    s.theta_ = theta;
    s.theta0_ = theta0_;
    switch (kind_) {
        case FamilyKind::BernoulliMean:
            if (!(theta > 0.0 && theta < 1.0)) throw std::domain_error("model: bernoulli theta must lie in (0,1)");
            break;
        case FamilyKind::PoissonMean: {
            if (!(theta > 0.0)) throw std::domain_error("model: poisson theta must be positive");
            if (theta > 64.0) throw std::domain_error("model: poisson theta above 64 is not supported");
            double p = std::exp(-theta);
            double cum = 0.0;
            for (int x = 0; x < 4096; ++x) {
                cum += p;
                s.vals_.push_back(static_cast<double>(x));
                s.cum_.push_back(cum);
                if (1.0 - cum < 1e-18 && x > theta + 10.0 * std::sqrt(theta)) break;
                p *= theta / (x + 1.0);
            }
            s.cum_.back() = 1.0;
            break;
        }
        case FamilyKind::CustomDiscrete: {
            double z = 0.0;
            for (const Atom& a : atoms_) {
                const double w = a.p * std::exp((theta - theta0_) * a.r);
                if (!std::isfinite(w)) throw std::domain_error("model: tilted atom weight overflows at this theta");
                z += w;
            }
            double cum = 0.0;
            for (const Atom& a : atoms_) {
                cum += a.p * std::exp((theta - theta0_) * a.r) / z;
                s.vals_.push_back(a.x);
                s.cum_.push_back(cum);
            }
            s.cum_.back() = 1.0;
            break;
        }
        case FamilyKind::NormalMean:
        case FamilyKind::TriangularNormal:
            break;
    }
    return s;
}

double Sampler::draw(std::uint64_t stage, Substream& rng) const {
    const double u = rng.next_uniform();
    switch (kind_) {
        case FamilyKind::BernoulliMean:
            return u > 1.0 - theta_ ? 1.0 : 0.0;
        case FamilyKind::NormalMean:
            return theta_ + normal_quantile(u);
        case FamilyKind::TriangularNormal:
            return static_cast<double>(stage) * theta_ + normal_quantile(u);
        case FamilyKind::PoissonMean:
        case FamilyKind::CustomDiscrete: {
            // CDF inversion over the precomputed table.
            std::size_t lo = 0, hi = cum_.size() - 1;
            while (lo < hi) {
                const std::size_t mid = (lo + hi) / 2;
                if (cum_[mid] < u)
                    lo = mid + 1;
                else
                    hi = mid;
            }
            return vals_[lo];
        }
    }
    throw std::logic_error("model: unreachable");
}

double ObservationModel::sample(double theta, std::uint64_t stage, Substream& rng) const {
    return make_sampler(theta).draw(stage, rng);
}

std::string ObservationModel::describe() const {
    std::ostringstream os;
    os << family_name(kind_) << "(theta0=" << theta0_;
    if (is_discrete())
        os << ", atoms=" << atoms_.size();
    else
        os << ", quadrature_nodes=" << quad_nodes_;
    os << ")";
    return os.str();
}

} // namespace lmpseq
