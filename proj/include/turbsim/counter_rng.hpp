#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>

namespace turbsim {

// Stateless counter-based generator: every draw is a pure function of
// (seed, stream, index), so parallel expansion is schedule independent.
inline constexpr std::string_view kGeneratorId = "splitmix64-boxmuller-v1";

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ (stream * 0xD1B54A32D192ED03ULL));
    return splitmix64(h ^ (index * 0xAEF17502108EF2D9ULL));
}

/// Uniform on (0, 1].
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return (static_cast<double>(counter_bits(seed, stream, index) >> 11) + 1.0) * 0x1.0p-53;
}

/// Box-Muller pair for normal indices (2*pair, 2*pair + 1).
inline std::pair<double, double> counter_normal_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t pair) {
    const double r = std::sqrt(-2.0 * std::log(counter_uniform(seed, stream, 2 * pair)));
    const double t = 2.0 * std::numbers::pi * counter_uniform(seed, stream, 2 * pair + 1);
    return {r * std::cos(t), r * std::sin(t)};
}

/// Standard normal number `index` of the stream.
inline double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    const auto [a, b] = counter_normal_pair(seed, stream, index / 2);
    return (index % 2) ? b : a;
}

/// Fills out[0..n) with normals 0..n-1 of the stream.
inline void fill_counter_normals(std::uint64_t seed, std::uint64_t stream, double* out, std::size_t n) {
    for (std::size_t k = 0; k + 1 < n; k += 2) {
        const auto [a, b] = counter_normal_pair(seed, stream, k / 2);
        out[k] = a;
        out[k + 1] = b;
    }
    if (n % 2) out[n - 1] = counter_normal_pair(seed, stream, (n - 1) / 2).first;
}

/// Sequential view over one counter stream; handy where a draw order is natural.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}
    double uniform() { return counter_uniform(seed_, stream_, next_++); }
    double normal() { return counter_normal(seed_, stream_, next_++); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * (uniform() - 0x1.0p-53); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        const auto v = static_cast<std::uint64_t>((uniform() - 0x1.0p-53) * static_cast<double>(n));
        return v < n ? v : n - 1;
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t next_ = 0;
};

/// Derive an independent child seed (e.g. per dataset sample).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t purpose) {
    return counter_bits(master, 0x5EED0000ULL + purpose, index);
}

}  // namespace turbsim
