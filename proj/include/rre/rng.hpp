#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace rre {

// Deterministic counter-based generator (splitmix64). The state advances by a
// fixed odd constant per draw, so identical seeds give identical streams on
// every platform regardless of call-site types.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    double uniform(double lo, double hi);

    // Index i with probability weights[i] / sum(weights).
    // Throws DistributionError if all weights are zero (or any is negative).
    int categorical(std::span<const double> weights);

    // Standard normal via Box-Muller (two uniforms per call, no cached spare,
    // so the stream position is call-count deterministic).
    double normal();

    // Stable sub-stream derivation: hash the tag into the seed so independent
    // components never share a stream.
    static std::uint64_t derive(std::uint64_t seed, std::string_view tag);
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt);

private:
    std::uint64_t state_;
};

}  // namespace rre
