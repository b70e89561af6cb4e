#include "lagsight/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "lagsight/error.hpp"
#include "lagsight/rng.hpp"

namespace lagsight {

Normalizer Normalizer::fit(const TimeSeriesFrame& frame, const std::vector<std::string>& series,
                           std::size_t row_begin, std::size_t row_end) {
    if (row_begin >= row_end || row_end > frame.length()) {
        throw ValidationError("normalizer: invalid row range [" + std::to_string(row_begin) +
                              "," + std::to_string(row_end) + ")");
    }
    Normalizer n;
    const double count = static_cast<double>(row_end - row_begin);
    for (const auto& name : series) {
        if (std::find(n.names.begin(), n.names.end(), name) != n.names.end()) continue;
        const std::size_t j = frame.column_index(name);
        double mean = 0.0;
        for (std::size_t t = row_begin; t < row_end; ++t) mean += frame.values.at(t, j);
        mean /= count;
        double var = 0.0;
        for (std::size_t t = row_begin; t < row_end; ++t) {
            const double d = frame.values.at(t, j) - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / count);
        const bool flat = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
        n.names.push_back(name);
        n.mean.push_back(mean);
        n.stddev.push_back(flat ? 0.0 : sd);
        n.constant.push_back(flat);
    }
    return n;
}

std::size_t Normalizer::slot(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return i;
    }
    throw ValidationError("normalizer has no statistics for series '" + name + "'");
}

double Normalizer::normalize(std::size_t s, double v) const {
    return constant[s] ? 0.0 : (v - mean[s]) / stddev[s];
}

double Normalizer::denormalize(std::size_t s, double v) const {
    return constant[s] ? mean[s] : v * stddev[s] + mean[s];
}

std::size_t window_count(std::size_t length, std::size_t window, std::size_t horizon) {
    if (length < window + horizon) return 0;
    return length - window - horizon + 1;
}

std::vector<WindowSample> make_windows(const TimeSeriesFrame& frame,
                                       const std::vector<std::string>& inputs,
                                       const std::string& target, std::size_t window,
                                       std::size_t horizon, const Normalizer& normalizer,
                                       std::size_t first_origin, std::size_t last_origin) {
    if (window < 1) throw ValidationError("window must be >= 1");
    if (inputs.empty()) throw ValidationError("at least one input series is required");
    const std::size_t T = frame.length();
    if (window_count(T, window, horizon) == 0) {
        throw ValidationError("series too short: need length >= window + horizon = " +
                              std::to_string(window) + " + " + std::to_string(horizon) + " = " +
                              std::to_string(window + horizon) + ", got " + std::to_string(T));
    }
    std::vector<std::size_t> cols, slots;
    for (const auto& name : inputs) {
        cols.push_back(frame.column_index(name));
        slots.push_back(normalizer.slot(name));
    }
    const std::size_t target_col = frame.column_index(target);
    const std::size_t target_slot = normalizer.slot(target);

    const std::size_t lo = std::max(first_origin, window - 1);
    const std::size_t hi = std::min(last_origin, T - 1 - horizon);
    std::vector<WindowSample> out;
    if (lo > hi) return out;
    out.reserve(hi - lo + 1);
    const std::size_t n = inputs.size();
    for (std::size_t t = lo; t <= hi; ++t) {
        WindowSample s;
        s.origin_t = t;
        s.x = Tensor({window, n});
        const std::size_t start = t + 1 - window;
        for (std::size_t i = 0; i < window; ++i)
            for (std::size_t j = 0; j < n; ++j)
                s.x.at(i, j) = normalizer.normalize(slots[j], frame.values.at(start + i, cols[j]));
        s.y = normalizer.normalize(target_slot, frame.values.at(t + horizon, target_col));
        out.push_back(std::move(s));
    }
    return out;
}

void SplitFractions::validate() const {
    if (!(train > 0.0 && val > 0.0 && test > 0.0)) {
        throw ValidationError("split fractions must all be positive");
    }
    if (std::abs(train + val + test - 1.0) > 1e-9) {
        throw ValidationError("split fractions must sum to 1");
    }
}

SplitRanges split_chronological(std::size_t n, const SplitFractions& fractions) {
    fractions.validate();
    const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::floor(fractions.val * static_cast<double>(n)));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
        throw ValidationError("too few samples (" + std::to_string(n) +
                              ") for a non-empty train/val/test split");
    }
    SplitRanges r;
    r.train_begin = 0;
    r.train_end = n_train;
    r.val_begin = n_train;
    r.val_end = n_train + n_val;
    r.test_begin = r.val_end;
    r.test_end = n;
    return r;
}

Dataset prepare_dataset(const TimeSeriesFrame& frame, const std::vector<std::string>& inputs,
                        const std::string& target, std::size_t window, std::size_t horizon,
                        const SplitFractions& fractions) {
    for (const auto& name : inputs) frame.column_index(name);
    frame.column_index(target);
    const std::size_t count = window_count(frame.length(), window, horizon);
    if (count == 0) {
        throw ValidationError("series too short: need length >= window + horizon = " +
                              std::to_string(window + horizon) + ", got " +
                              std::to_string(frame.length()));
    }
    const SplitRanges r = split_chronological(count, fractions);
    const std::size_t first = window - 1;
    const std::size_t last_train_origin = first + r.train_end - 1;

    std::vector<std::string> series = inputs;
    series.push_back(target);
    Dataset d;
    d.inputs = inputs;
    d.target = target;
    d.window = window;
    d.horizon = horizon;
    d.normalizer = Normalizer::fit(frame, series, 0, last_train_origin + 1);
    d.train = make_windows(frame, inputs, target, window, horizon, d.normalizer,
                           first + r.train_begin, first + r.train_end - 1);
    d.val = make_windows(frame, inputs, target, window, horizon, d.normalizer,
                         first + r.val_begin, first + r.val_end - 1);
    d.test = make_windows(frame, inputs, target, window, horizon, d.normalizer,
                          first + r.test_begin, first + r.test_end - 1);
    return d;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ValidationError("lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw ValidationError("beta1/beta2 must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ValidationError("eps must be positive");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
    if (chunk < 1) throw ValidationError("chunk must be >= 1");
    split.validate();
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) throw ShapeError("Adam: params/grads count mismatch");
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.emplace_back(p->shape(), 0.0);
            v_.emplace_back(p->shape(), 0.0);
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (g.shape() != p.shape()) throw ShapeError("Adam: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
            v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m_[k][i] / c1;
            const double vhat = v_[k][i] / c2;
            p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double f = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g.data()) v *= f;
    }
    return norm;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& f) {
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

double Checkpoint::denormalize_target(double v) const {
    return normalizer.denormalize(normalizer.slot(target), v);
}

double Checkpoint::predict(const Tensor& window) const {
    return denormalize_target(model.predict(window));
}

std::vector<double> Checkpoint::predict(std::span<const WindowSample> samples,
                                        unsigned threads) const {
    constexpr std::size_t kEvalChunk = 64;
    const std::size_t chunks = (samples.size() + kEvalChunk - 1) / kEvalChunk;
    std::vector<double> out(samples.size());
    parallel_for(chunks, threads, [&](std::size_t c) {
        const std::size_t lo = c * kEvalChunk, hi = std::min(samples.size(), lo + kEvalChunk);
        std::vector<const Tensor*> xs;
        for (std::size_t i = lo; i < hi; ++i) xs.push_back(&samples[i].x);
        const auto pred = model.predict(xs);
        for (std::size_t i = lo; i < hi; ++i) out[i] = denormalize_target(pred[i - lo]);
    });
    return out;
}

Metrics compute_metrics(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size()) throw ShapeError("metrics: length mismatch");
    if (predicted.empty()) throw ValidationError("metrics: empty sample set");
    const double n = static_cast<double>(actual.size());
    double se = 0.0, ae = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double e = predicted[i] - actual[i];
        se += e * e;
        ae += std::abs(e);
        mean += actual[i];
    }
    mean /= n;
    double tot = 0.0;
    for (double a : actual) tot += (a - mean) * (a - mean);
    Metrics m;
    m.count = actual.size();
    m.rmse = std::sqrt(se / n);
    m.mae = ae / n;
    m.r2 = tot > 0.0 ? 1.0 - se / tot : (se == 0.0 ? 1.0 : 0.0);
    return m;
}

Metrics evaluate(const Checkpoint& checkpoint, std::span<const WindowSample> samples,
                 unsigned threads) {
    if (samples.empty()) throw ValidationError("evaluate: empty sample set");
    const auto pred = checkpoint.predict(samples, threads);
    std::vector<double> actual(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        actual[i] = checkpoint.denormalize_target(samples[i].y);
    }
    return compute_metrics(pred, actual);
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    if (s == "all") return Split::All;
    throw ValidationError("unknown split '" + s + "' (expected train|val|test|all)");
}

const char* to_string(Split split) noexcept {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        case Split::All: return "all";
    }
    return "?";
}

std::vector<WindowSample> windows_for_split(const TimeSeriesFrame& frame,
                                            const Checkpoint& checkpoint, Split split) {
    const auto& mc = checkpoint.model.config();
    const std::size_t count = window_count(frame.length(), mc.window, mc.horizon_steps);
    if (count == 0) {
        throw ValidationError("series too short: need length >= window + horizon = " +
                              std::to_string(mc.window + mc.horizon_steps) + ", got " +
                              std::to_string(frame.length()));
    }
    const std::size_t first = mc.window - 1;
    std::size_t lo = 0, hi = count;
    if (split != Split::All) {
        const SplitRanges r = split_chronological(count, checkpoint.train_config.split);
        lo = split == Split::Train ? r.train_begin : split == Split::Val ? r.val_begin : r.test_begin;
        hi = split == Split::Train ? r.train_end : split == Split::Val ? r.val_end : r.test_end;
    }
    return make_windows(frame, checkpoint.inputs, checkpoint.target, mc.window, mc.horizon_steps,
                        checkpoint.normalizer, first + lo, first + hi - 1);
}

namespace {

struct ChunkResult {
    double loss = 0.0;
    std::vector<Tensor> grads;
};

ChunkResult chunk_gradient(const Model& model, std::span<const WindowSample* const> samples) {
    Graph g;
    std::vector<const Tensor*> xs;
    Tensor neg_y({samples.size(), 1});
    for (std::size_t i = 0; i < samples.size(); ++i) {
        xs.push_back(&samples[i]->x);
        neg_y[i] = -samples[i]->y;
    }
    std::vector<NodeId> params;
    const NodeId pred = model.build(g, stack_windows(xs), samples.size(), params);
    const NodeId diff = g.add(pred, g.input(std::move(neg_y)));
    const NodeId loss = g.sum(g.mul(diff, diff), 0);
    const GradientMap grads = g.backward(loss, params);
    ChunkResult r;
    r.loss = g.value(loss).item();
    for (auto p : params) r.grads.push_back(grads[p]);
    return r;
}

double rmse_original(const Checkpoint& ckpt, std::span<const WindowSample> samples,
                     unsigned threads) {
    return evaluate(ckpt, samples, threads).rmse;
}

}  // namespace

Checkpoint fit(ModelKind kind, const Dataset& data, const TrainConfig& tc,
               ModelConfig mc, std::uint64_t seed, const EpochCallback& on_epoch) {
    tc.validate();
    mc.seed = seed;
    mc.n_inputs = data.inputs.size();
    mc.window = data.window;
    mc.horizon_steps = data.horizon;
    mc.validate();
    if (data.train.empty() || data.val.empty()) {
        throw ValidationError("fit: train and validation splits must be non-empty");
    }

    Checkpoint ckpt{Model(kind, mc), data.normalizer, tc, seed, data.inputs, data.target, {}, 0};
    ckpt.train_config.seed = seed;
    const double target_scale = [&] {
        const std::size_t s = data.normalizer.slot(data.target);
        return data.normalizer.constant[s] ? 0.0 : data.normalizer.stddev[s];
    }();

    Adam adam(tc.lr, tc.beta1, tc.beta2, tc.eps);
    Rng shuffle_rng(seed ^ 0xD1B54A32D192ED03ULL);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    auto params = ckpt.model.parameters();
    std::vector<Tensor*> param_ptrs;
    for (auto& p : params) param_ptrs.push_back(p.tensor);

    Model best = ckpt.model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        }
        double epoch_se = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size, ++batch_index) {
            const std::size_t stop = std::min(order.size(), start + tc.batch_size);
            std::vector<const WindowSample*> batch;
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&data.train[order[i]]);

            const std::size_t n_chunks = (batch.size() + tc.chunk - 1) / tc.chunk;
            std::vector<ChunkResult> parts(n_chunks);
            parallel_for(n_chunks, tc.threads, [&](std::size_t c) {
                const std::size_t lo = c * tc.chunk, hi = std::min(batch.size(), lo + tc.chunk);
                parts[c] = chunk_gradient(
                    ckpt.model, std::span<const WindowSample* const>(batch).subspan(lo, hi - lo));
            });

            double loss = 0.0;
            std::vector<Tensor> grads = std::move(parts[0].grads);
            loss += parts[0].loss;
            for (std::size_t c = 1; c < n_chunks; ++c) {
                loss += parts[c].loss;
                for (std::size_t k = 0; k < grads.size(); ++k)
                    for (std::size_t i = 0; i < grads[k].size(); ++i)
                        grads[k][i] += parts[c].grads[k][i];
            }
            const double inv = 1.0 / static_cast<double>(batch.size());
            for (auto& g : grads)
                for (double& v : g.data()) v *= inv;
            if (!std::isfinite(loss)) {
                throw DivergenceError("training diverged (non-finite loss) at epoch " +
                                      std::to_string(epoch) + ", batch " +
                                      std::to_string(batch_index));
            }
            epoch_se += loss;
            clip_global_norm(grads, tc.clip_norm);
            adam.step(param_ptrs, grads);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_rmse = std::sqrt(epoch_se / static_cast<double>(order.size())) * target_scale;
        rec.val_rmse = rmse_original(ckpt, data.val, tc.threads);
        ckpt.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_rmse < best_val) {
            best_val = rec.val_rmse;
            best = ckpt.model;
            ckpt.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    ckpt.model = std::move(best);
    return ckpt;
}

}  // namespace lagsight
