#pragma once

#include <concepts>
#include <cstdint>
#include <random>

namespace msdi {

/// Sources of the primitive noise consumed by model simulation.  Models never
/// own a generator; callers pass one in so runs are reproducible.
template <class R>
concept NoiseSource = requires(R& r, std::int64_t n, double p) {
    { r.normal() } -> std::convertible_to<double>;
    { r.binomial(n, p) } -> std::convertible_to<std::int64_t>;
};

/// SplitMix64 finalizer, used to derive independent per-task seeds.
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) noexcept {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }

    std::int64_t binomial(std::int64_t n, double p) {
        if (n <= 0) return 0;
        return std::binomial_distribution<std::int64_t>(n, p)(engine_);
    }

    /// Geometric number of failures before the first success.
    std::uint64_t geometric(double p) { return std::geometric_distribution<std::uint64_t>(p)(engine_); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Deterministic noise: every Gaussian draw is zero and binomial draws
/// return the rounded mean.
struct ZeroNoise {
    double normal() const noexcept { return 0.0; }
    std::int64_t binomial(std::int64_t n, double p) const noexcept {
        return static_cast<std::int64_t>(static_cast<double>(n) * p + 0.5);
    }
};

static_assert(NoiseSource<RandomSource>);
static_assert(NoiseSource<ZeroNoise>);

} // namespace msdi
