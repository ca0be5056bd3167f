#include "lmpseq/dp_truncated.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <unordered_map>

#include "lmpseq/errors.hpp"

namespace lmpseq {
namespace {

void check_tree_capacity(const ObservationModel& model, std::size_t horizon) {
    if (!model.is_iid() || !model.is_discrete())
        throw UnsupportedModelError("truncated DP: exact trees require a discrete iid family");
    if (horizon == 0) throw ConfigError("truncated DP: horizon must be at least 1");
    if (horizon > 20) throw CapacityError("truncated DP: horizon above 20 is not supported");
    const std::size_t a = model.atoms().size();
    if (a > 8) throw CapacityError("truncated DP: support above 8 atoms is not supported");
    double nodes = 0.0, level = 1.0;
    for (std::size_t n = 1; n <= horizon; ++n) {
        level *= static_cast<double>(a);
        nodes += level;
    }
    if (nodes > static_cast<double>(1 << 22)) throw CapacityError("truncated DP: observation tree above 2^22 nodes");
}

void check_stop_table(const StopTable& stop, std::size_t horizon, std::size_t atom_count) {
    if (stop.size() + 1 != horizon)
        throw ConfigError("truncated DP: stop table must cover exactly levels 1..horizon-1");
    std::size_t expect = 1;
    for (std::size_t n = 1; n < horizon; ++n) {
        expect *= atom_count;
        if (stop[n - 1].size() != expect)
            throw ConfigError("truncated DP: stop table level " + std::to_string(n) + " is partial");
    }
}

// Forward walk of one deterministic rule, accumulating exact components.
// stopped(n, i) is consulted for levels 1..horizon-1 only.
template <typename StopFn>
void walk(const std::vector<Atom>& atoms, double b, double c, std::size_t horizon, StopFn&& stopped,
          std::size_t n, std::size_t i, double p, double z, PolicyEvaluation& acc) {
    if (n == horizon || stopped(n, i)) {
        const double rel = z - b;
        acc.L += p * (c * static_cast<double>(n) + g_payoff(rel));
        acc.asn += p * static_cast<double>(n);
        if (rel >= 0.0) {
            acc.alpha += p;
            acc.beta_dot += p * z;
        }
        return;
    }
    for (std::size_t j = 0; j < atoms.size(); ++j)
        walk(atoms, b, c, horizon, stopped, n + 1, i * atoms.size() + j, p * atoms[j].p, z + atoms[j].r, acc);
}

// Lean L-only walk for the enumeration hot path.
double walk_L(const std::vector<Atom>& atoms, double b, double c, std::size_t horizon,
              const std::size_t* level_bit_offset, std::uint64_t mask, std::size_t n, std::size_t i,
              double p, double z) {
    const bool stopped = n == horizon || ((mask >> (level_bit_offset[n] + i)) & 1u) != 0;
    if (stopped) return p * (c * static_cast<double>(n) + g_payoff(z - b));
    double acc = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j)
        acc += walk_L(atoms, b, c, horizon, level_bit_offset, mask, n + 1, i * atoms.size() + j,
                      p * atoms[j].p, z + atoms[j].r);
    return acc;
}

std::vector<std::size_t> internal_bit_offsets(std::size_t atom_count, std::size_t horizon) {
    // offsets[n] = first mask bit of level n, n = 1..horizon-1; offsets[0] unused
    std::vector<std::size_t> offsets(horizon, 0);
    std::size_t total = 0, level = 1;
    for (std::size_t n = 1; n < horizon; ++n) {
        level *= atom_count;
        offsets[n] = total;
        total += level;
    }
    offsets[0] = total;  // stash the internal node count in the unused slot
    return offsets;
}

BruteForceResult brute_force_impl(const ObservationModel& model, double b, double c, std::size_t horizon,
                                  bool parallel) {
    check_tree_capacity(model, horizon);
    if (!std::isfinite(b) || !std::isfinite(c)) throw ConfigError("brute force: b and c must be finite");
    const std::vector<Atom>& atoms = model.atoms();
    const std::vector<std::size_t> offsets = internal_bit_offsets(atoms.size(), horizon);
    const std::size_t internal_nodes = offsets[0];
    if (internal_nodes > 20)
        throw CapacityError("brute force: " + std::to_string(internal_nodes) +
                            " internal histories exceed the 2^20 rule budget");
    const std::uint64_t rules = 1ull << internal_nodes;

    double best_value = std::numeric_limits<double>::infinity();
    std::uint64_t best_mask = 0;

    if (parallel) {
#pragma omp parallel
        {
            double local_value = std::numeric_limits<double>::infinity();
            std::uint64_t local_mask = 0;
#pragma omp for schedule(static) nowait
            for (long long m = 0; m < static_cast<long long>(rules); ++m) {
                const std::uint64_t mask = static_cast<std::uint64_t>(m);
                double value = 0.0;
                for (std::size_t j = 0; j < atoms.size(); ++j)
                    value += walk_L(atoms, b, c, horizon, offsets.data(), mask, 1, j, atoms[j].p, atoms[j].r);
                if (value < local_value || (value == local_value && mask < local_mask)) {
                    local_value = value;
                    local_mask = mask;
                }
            }
#pragma omp critical
            {
                if (local_value < best_value || (local_value == best_value && local_mask < best_mask)) {
                    best_value = local_value;
                    best_mask = local_mask;
                }
            }
        }
    } else {
        for (std::uint64_t mask = 0; mask < rules; ++mask) {
            double value = 0.0;
            for (std::size_t j = 0; j < atoms.size(); ++j)
                value += walk_L(atoms, b, c, horizon, offsets.data(), mask, 1, j, atoms[j].p, atoms[j].r);
            if (value < best_value) {
                best_value = value;
                best_mask = mask;
            }
        }
    }

    BruteForceResult result;
    result.value = best_value;
    result.rules_scanned = rules;
    result.best_stop.resize(horizon - 1);
    std::size_t level = 1;
    for (std::size_t n = 1; n < horizon; ++n) {
        level *= atoms.size();
        result.best_stop[n - 1].resize(level);
        for (std::size_t i = 0; i < level; ++i)
            result.best_stop[n - 1][i] = static_cast<std::uint8_t>((best_mask >> (offsets[n] + i)) & 1u);
    }
    return result;
}

} // namespace

TruncatedPolicy backward_induction(const ObservationModel& model, double b, double c, std::size_t horizon) {
    check_tree_capacity(model, horizon);
    if (!std::isfinite(b) || !std::isfinite(c)) throw ConfigError("backward induction: b and c must be finite");
    const std::vector<Atom>& atoms = model.atoms();
    const std::size_t a = atoms.size();

    TruncatedPolicy policy;
    policy.b = b;
    policy.c = c;
    policy.horizon = horizon;
    policy.atom_count = a;
    policy.z.resize(horizon);
    policy.v.resize(horizon);
    policy.continuation.resize(horizon > 0 ? horizon - 1 : 0);
    policy.stop.resize(horizon > 0 ? horizon - 1 : 0);

    // Forward pass: score positions.
    std::size_t count = 1;
    for (std::size_t n = 1; n <= horizon; ++n) {
        count *= a;
        policy.z[n - 1].resize(count);
        const std::vector<double>* parent = n > 1 ? &policy.z[n - 2] : nullptr;
        auto& level = policy.z[n - 1];
#pragma omp parallel for schedule(static) if (count > 4096)
        for (long long i = 0; i < static_cast<long long>(count); ++i) {
            const std::size_t idx = static_cast<std::size_t>(i);
            const double base = parent ? (*parent)[idx / a] : 0.0;
            level[idx] = base + atoms[idx % a].r;
        }
    }

    // Terminal level: forced stop.
    {
        auto& last = policy.v[horizon - 1];
        last.resize(policy.z[horizon - 1].size());
        const auto& zs = policy.z[horizon - 1];
#pragma omp parallel for schedule(static) if (last.size() > 4096)
        for (long long i = 0; i < static_cast<long long>(last.size()); ++i)
            last[static_cast<std::size_t>(i)] = g_payoff(zs[static_cast<std::size_t>(i)] - b);
    }

    // Backward pass; ties resolve to stopping.
    for (std::size_t n = horizon - 1; n >= 1; --n) {
        const std::size_t level_count = policy.z[n - 1].size();
        policy.v[n - 1].resize(level_count);
        policy.continuation[n - 1].resize(level_count);
        policy.stop[n - 1].resize(level_count);
        const auto& child = policy.v[n];
        const auto& zs = policy.z[n - 1];
        auto& vs = policy.v[n - 1];
        auto& conts = policy.continuation[n - 1];
        auto& stops = policy.stop[n - 1];
#pragma omp parallel for schedule(static) if (level_count > 4096)
        for (long long i = 0; i < static_cast<long long>(level_count); ++i) {
            const std::size_t idx = static_cast<std::size_t>(i);
            double expect = 0.0;
            for (std::size_t j = 0; j < a; ++j) expect += atoms[j].p * child[idx * a + j];
            const double cont = c + expect;
            const double stop_value = g_payoff(zs[idx] - b);
            conts[idx] = cont;
            if (stop_value <= cont) {
                vs[idx] = stop_value;
                stops[idx] = 1;
            } else {
                vs[idx] = cont;
                stops[idx] = 0;
            }
        }
    }

    double expect = 0.0;
    for (std::size_t j = 0; j < a; ++j) expect += atoms[j].p * policy.v[0][j];
    policy.value = c + expect;
    return policy;
}

PolicyEvaluation evaluate_stop_table(const ObservationModel& model, double b, double c,
                                     std::size_t horizon, const StopTable& stop) {
    check_tree_capacity(model, horizon);
    check_stop_table(stop, horizon, model.atoms().size());
    const std::vector<Atom>& atoms = model.atoms();
    PolicyEvaluation acc;
    auto stopped = [&stop](std::size_t n, std::size_t i) { return stop[n - 1][i] != 0; };
    for (std::size_t j = 0; j < atoms.size(); ++j)
        walk(atoms, b, c, horizon, stopped, 1, j, atoms[j].p, atoms[j].r, acc);
    return acc;
}

PolicyEvaluation evaluate_L_truncated(const ObservationModel& model, const TruncatedPolicy& policy) {
    if (policy.atom_count != model.atoms().size())
        throw ConfigError("evaluate_L_truncated: policy was built for a different support size");
    return evaluate_stop_table(model, policy.b, policy.c, policy.horizon, policy.stop);
}

BruteForceResult brute_force_min(const ObservationModel& model, double b, double c, std::size_t horizon) {
    return brute_force_impl(model, b, c, horizon, true);
}

BruteForceResult brute_force_min_serial(const ObservationModel& model, double b, double c,
                                        std::size_t horizon) {
    return brute_force_impl(model, b, c, horizon, false);
}

std::vector<double> regularity_sequence(const ObservationModel& model, const TestDesign& design,
                                        const RhoGrid& rho, std::size_t n_max) {
    if (!model.is_iid() || !model.is_discrete())
        throw UnsupportedModelError("regularity diagnostic: requires a discrete iid family");
    if (!rho.converged) throw NumericError("regularity diagnostic: the rho grid has not converged");
    if (n_max == 0) throw ConfigError("regularity diagnostic: n_max must be at least 1");
    const std::vector<Atom>& atoms = model.atoms();

    // Survivor distribution of z_n over paths that have not stopped before n,
    // collapsed over identical score positions.
    std::vector<std::pair<double, double>> survivors;
    for (const Atom& a : atoms) survivors.emplace_back(a.r, a.p);

    std::vector<double> gaps;
    gaps.reserve(n_max);
    for (std::size_t n = 1; n <= n_max; ++n) {
        std::sort(survivors.begin(), survivors.end());
        double gap = 0.0;
        for (const auto& [z, p] : survivors) {
            const double rel = z - design.b;
            gap += p * (g_payoff(rel) - rho.value_at(rel));
        }
        gaps.push_back(gap);
        if (n == n_max) break;

        std::unordered_map<double, double> next;
        next.reserve(survivors.size() * atoms.size());
        for (const auto& [z, p] : survivors) {
            if (!(z > design.lower && z < design.upper)) continue;  // stopped at n
            for (const Atom& a : atoms) next[z + a.r] += p * a.p;
        }
        if (next.size() > 2'000'000) throw CapacityError("regularity diagnostic: survivor support too large");
        survivors.assign(next.begin(), next.end());
    }
    return gaps;
}

void write_policy_csv(const ObservationModel& model, const TruncatedPolicy& policy, std::ostream& os) {
    const std::vector<Atom>& atoms = model.atoms();
    os << "history,z,stop,V\n";
    char buf[96];
    for (std::size_t n = 1; n <= policy.horizon; ++n) {
        const auto& zs = policy.z[n - 1];
        for (std::size_t i = 0; i < zs.size(); ++i) {
            std::string history;
            std::size_t rem = i;
            std::vector<std::size_t> digits(n);
            for (std::size_t d = n; d-- > 0;) {
                digits[d] = rem % policy.atom_count;
                rem /= policy.atom_count;
            }
            for (std::size_t d = 0; d < n; ++d) {
                if (d) history += ';';
                std::snprintf(buf, sizeof buf, "%g", atoms[digits[d]].x);
                history += buf;
            }
            const bool stop = n == policy.horizon || policy.stop[n - 1][i] != 0;
            std::snprintf(buf, sizeof buf, ",%.17g,%d,%.17g\n", zs[i], stop ? 1 : 0, policy.v[n - 1][i]);
            os << history << buf;
        }
    }
}

} // namespace lmpseq
