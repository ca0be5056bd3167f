#pragma once

#include <cstdint>

namespace lmpseq {

/// splitmix64 finalizer: full-avalanche 64-bit mix.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Counter-derived random substream (splitmix64 sequence).
///
/// A stream is addressed by (seed, replication, lane) alone, so any replication
/// can be generated on any thread in any order with identical output. Lanes
/// separate independent draws for the same replication (e.g. decision paths vs
/// ASN paths).
class Substream {
public:
    Substream(std::uint64_t seed, std::uint64_t replication, std::uint64_t lane = 0)
        : state_(mix64(mix64(seed ^ 0x6c62272e07bb0142ull) + 0x9e3779b97f4a7c15ull * (replication + 1) +
                       0x2545f4914f6cdd1dull * lane)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform draw on the open interval (0,1); never returns an endpoint,
    /// so quantile transforms stay finite.
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

/// Standard normal quantile (Wichura's PPND16 rational approximation,
/// absolute error below 1e-15 on (0,1)).
double normal_quantile(double p);

/// Standard normal CDF via erfc.
double normal_cdf(double x);

} // namespace lmpseq
