#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace lagsight {

// Reproducible random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; the conversions below are spelled
// out here (instead of using <random> distributions, whose algorithms are
// implementation-defined) so a seed yields the same numbers everywhere.
class Rng {
public:
    static constexpr const char* kName = "mt19937_64";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool coin() { return (engine_() >> 63) != 0; }

    // Box-Muller, cosine branch only.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n); n > 0. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace lagsight
