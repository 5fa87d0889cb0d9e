#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace qosmem {

/// Seeded RNG with platform-independent draws.
///
/// std::uniform_*_distribution output is implementation-defined, so bounded
/// integers and unit reals are derived directly from the mt19937_64 stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound); bound must be > 0.
    std::uint64_t below(std::uint64_t bound) {
        // Rejection sampling removes modulo bias.
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % bound;
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace qosmem
