#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lagsight/frame.hpp"
#include "lagsight/model.hpp"

namespace lagsight {

// Per-series z-score statistics. Series whose training-split spread is zero
// are flagged constant and normalize to 0.
struct Normalizer {
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<bool> constant;

    // Fits on frame rows [row_begin, row_end).
    static Normalizer fit(const TimeSeriesFrame& frame, const std::vector<std::string>& series,
                          std::size_t row_begin, std::size_t row_end);

    std::size_t slot(const std::string& name) const;
    double normalize(std::size_t slot, double v) const;
    double denormalize(std::size_t slot, double v) const;

    bool operator==(const Normalizer&) const = default;
};

struct WindowSample {
    Tensor x;  // W x n, normalized
    double y = 0.0;  // normalized target at origin_t + horizon
    std::size_t origin_t = 0;
};

// T - W - horizon + 1, or 0 when the frame is too short.
std::size_t window_count(std::size_t length, std::size_t window, std::size_t horizon);

// One sample per origin t in [first_origin, last_origin], stride 1; by default
// every valid origin. Throws ValidationError when no sample fits.
std::vector<WindowSample> make_windows(const TimeSeriesFrame& frame,
                                       const std::vector<std::string>& inputs,
                                       const std::string& target, std::size_t window,
                                       std::size_t horizon, const Normalizer& normalizer,
                                       std::size_t first_origin = 0,
                                       std::size_t last_origin = SIZE_MAX);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;

    void validate() const;
    bool operator==(const SplitFractions&) const = default;
};

// Sample-index ranges [begin, end) of a chronological split.
struct SplitRanges {
    std::size_t train_begin = 0, train_end = 0;
    std::size_t val_begin = 0, val_end = 0;
    std::size_t test_begin = 0, test_end = 0;
};

SplitRanges split_chronological(std::size_t n_samples, const SplitFractions& fractions);

struct Dataset {
    std::vector<std::string> inputs;
    std::string target;
    std::size_t window = 0;
    std::size_t horizon = 0;
    Normalizer normalizer;
    std::vector<WindowSample> train, val, test;
};

// Splits chronologically, fits the normalizer on frame rows up to and
// including the last training origin, then windows every split with it.
Dataset prepare_dataset(const TimeSeriesFrame& frame, const std::vector<std::string>& inputs,
                        const std::string& target, std::size_t window, std::size_t horizon,
                        const SplitFractions& fractions);

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;
    double clip_norm = 5.0;
    SplitFractions split;
    std::uint64_t seed = 0;
    // Samples per graph. Gradients are reduced chunk by chunk in a fixed
    // order, so the result does not depend on `threads`.
    std::size_t chunk = 32;
    unsigned threads = 1;

    void validate() const;
    bool operator==(const TrainConfig& o) const {
        return lr == o.lr && beta1 == o.beta1 && beta2 == o.beta2 && eps == o.eps &&
               batch_size == o.batch_size && max_epochs == o.max_epochs &&
               patience == o.patience && clip_norm == o.clip_norm && split == o.split &&
               seed == o.seed && chunk == o.chunk;
    }
};

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps);

    void step(std::span<Tensor* const> params, std::span<const Tensor> grads);
    std::size_t steps() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Scales grads so their global L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_rmse = 0.0;  // original units, accumulated during the epoch
    double val_rmse = 0.0;    // original units, after the epoch
    bool operator==(const EpochRecord&) const = default;
};

struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    Model model;
    Normalizer normalizer;
    TrainConfig train_config;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::string target;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;

    ModelKind kind() const noexcept { return model.kind(); }

    // Prediction in original target units for a normalized window.
    double predict(const Tensor& window) const;
    std::vector<double> predict(std::span<const WindowSample> samples, unsigned threads = 1) const;
    double denormalize_target(double v) const;
};

enum class Split { Train, Val, Test, All };

Split parse_split(const std::string& s);
const char* to_string(Split split) noexcept;

// Windows of one chronological split of `frame`, normalized with the
// checkpoint's own statistics and split fractions.
std::vector<WindowSample> windows_for_split(const TimeSeriesFrame& frame,
                                            const Checkpoint& checkpoint, Split split);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam on mean squared error over normalized targets. Only the train split
// is shuffled. Keeps the parameters of the best validation epoch and stops
// after `patience` epochs without improvement.
Checkpoint fit(ModelKind kind, const Dataset& data, const TrainConfig& train_config,
               ModelConfig model_config, std::uint64_t seed,
               const EpochCallback& on_epoch = {});

struct Metrics {
    double rmse = 0.0;
    double mae = 0.0;
    double r2 = 0.0;
    std::size_t count = 0;
};

Metrics compute_metrics(std::span<const double> predicted, std::span<const double> actual);

// Metrics in original units.
Metrics evaluate(const Checkpoint& checkpoint, std::span<const WindowSample> samples,
                 unsigned threads = 1);

// Runs f(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& f);

}  // namespace lagsight
