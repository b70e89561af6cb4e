#include "lagsight/synth.hpp"

#include <cmath>

#include "lagsight/error.hpp"
#include "lagsight/rng.hpp"

namespace lagsight {

namespace {

void check_range(const char* name, const Range& r) {
    if (!(r.lo >= 0.0) || !(r.lo <= r.hi) || !std::isfinite(r.hi)) {
        throw ValidationError(std::string(name) + " must satisfy 0 <= lo <= hi, got [" +
                              std::to_string(r.lo) + "," + std::to_string(r.hi) + "]");
    }
}

std::size_t draw_minutes(Rng& rng, const Range& r) {
    const auto lo = static_cast<std::uint64_t>(std::ceil(r.lo));
    const auto hi = static_cast<std::uint64_t>(std::floor(r.hi));
    if (hi <= lo) return lo;
    return lo + rng.below(hi - lo + 1);
}

constexpr std::uint64_t kNoiseStream = 0x9E3779B97F4A7C15ULL;

}  // namespace

void SynthConfig::validate() const {
    check_range("gap_range", gap_range);
    check_range("step_range", step_range);
    check_range("transition_range", transition_range);
    if (length_minutes <= lag_minutes) {
        throw ValidationError("length_minutes (" + std::to_string(length_minutes) +
                              ") must exceed lag_minutes (" + std::to_string(lag_minutes) + ")");
    }
    if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be >= 0");
}

std::string synth_provenance(std::uint64_t seed) {
    return "lagsight-synth v1 seed=" + std::to_string(seed) + " rng=" + Rng::kName;
}

TimeSeriesFrame generate(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    const std::size_t T = config.length_minutes;
    Rng rng(seed);

    std::vector<double> a(T);
    double level = config.base_level;
    std::size_t t = 0;
    while (t < T) {
        const std::size_t gap = draw_minutes(rng, config.gap_range);
        for (std::size_t m = 0; m < gap && t < T; ++m) a[t++] = level;
        if (t >= T) break;
        const double magnitude = rng.uniform(config.step_range.lo, config.step_range.hi);
        const double step = rng.coin() ? magnitude : -magnitude;
        const std::size_t ramp = draw_minutes(rng, config.transition_range);
        const double start = level;
        for (std::size_t m = 1; m <= ramp && t < T; ++m) {
            a[t++] = start + step * static_cast<double>(m) / static_cast<double>(ramp);
        }
        level = start + step;
        if (ramp == 0) a[t++] = level;
    }

    TimeSeriesFrame frame;
    frame.names = {"A", "B", "C", "D"};
    frame.index.resize(T);
    frame.values = Tensor({T, 4});
    frame.provenance = synth_provenance(seed);
    for (std::size_t i = 0; i < T; ++i) {
        const double lagged = i >= config.lag_minutes ? a[i - config.lag_minutes] : config.base_level;
        const double b = config.alpha_coef * lagged;
        frame.index[i] = static_cast<std::int64_t>(i);
        frame.values.at(i, 0) = a[i];
        frame.values.at(i, 1) = b;
        frame.values.at(i, 2) = config.beta_coef * b;
        frame.values.at(i, 3) = config.base_level;
    }
    if (config.noise_sigma > 0.0) {
        Rng noise(seed ^ kNoiseStream);
        for (std::size_t i = 0; i < T; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                frame.values.at(i, j) += config.noise_sigma * noise.normal();
    }
    return frame;
}

}  // namespace lagsight
