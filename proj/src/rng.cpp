#include "rre/rng.hpp"

#include <cmath>

#include "rre/errors.hpp"

namespace rre {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}
}  // namespace

std::uint64_t Rng::next_u64() {
    state_ += kGamma;
    return mix64(state_);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw DistributionError("negative categorical weight");
        total += w;
    }
    if (total <= 0.0) throw DistributionError("categorical weights sum to zero");
    double u = uniform() * total;
    double acc = 0.0;
    int last = -1;
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last = static_cast<int>(i);
        if (u < acc) return last;
    }
    return last;  // u landed on the rounding tail; pick the last positive slot
}

double Rng::normal() {
    // Avoid log(0) by nudging the first uniform off zero.
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::string_view tag) {
    // FNV-1a over the tag, then mix with the seed.
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return mix64(seed ^ mix64(h));
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t salt) {
    return mix64(seed ^ mix64(salt + kGamma));
}

}  // namespace rre
