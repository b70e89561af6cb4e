#pragma once

#include <cstdint>
#include <string>

#include "lagsight/frame.hpp"

namespace lagsight {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

// Artificial lagged dataset:
//   A: piecewise-linear random level walk starting at base_level
//   B(t) = alpha_coef * A(t - lag_minutes), with A(t < 0) = base_level
//   C(t) = beta_coef * B(t)
//   D(t) = base_level
struct SynthConfig {
    std::size_t length_minutes = 10000;
    double alpha_coef = 0.1;
    double beta_coef = 0.5;
    double base_level = 1450.0;
    std::size_t lag_minutes = 180;
    Range gap_range{0.0, 180.0};         // hold time between changes, minutes
    Range step_range{5.0, 50.0};         // |amplitude change|
    Range transition_range{10.0, 60.0};  // linear ramp duration, minutes
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Gap and ramp durations are drawn as integers uniform on [ceil(lo), floor(hi)];
// step magnitudes are continuous with an equiprobable sign. Noise, when
// enabled, is drawn from a second stream so A/B/C shapes do not depend on it.
TimeSeriesFrame generate(const SynthConfig& config, std::uint64_t seed);

std::string synth_provenance(std::uint64_t seed);

}  // namespace lagsight
