#include "lagsight/model.hpp"

#include <cmath>

#include "lagsight/error.hpp"
#include "lagsight/rng.hpp"

namespace lagsight {

void ModelConfig::validate() const {
    if (n_inputs < 1) throw ValidationError("n_inputs must be >= 1");
    if (window < 2) throw ValidationError("window must be >= 2 (attention needs a previous state)");
    if (horizon_steps < 1) throw ValidationError("horizon_steps must be >= 1");
    if (conv_filters < 1) throw ValidationError("conv_filters must be >= 1");
    if (conv_kernel < 1) throw ValidationError("conv_kernel must be >= 1");
    if (lstm_hidden < 1) throw ValidationError("lstm_hidden must be >= 1");
}

const char* to_string(ModelKind kind) noexcept {
    return kind == ModelKind::Attention ? "attention" : "vanilla";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "attention") return ModelKind::Attention;
    if (s == "vanilla") return ModelKind::Vanilla;
    throw ValidationError("unknown model kind '" + s + "' (expected attention|vanilla)");
}

double AttnLstmParams::conv_tap(std::size_t filter, std::size_t series, std::size_t offset) const {
    const std::size_t n_series = lstm.wx.rows() - conv_bias.cols();
    return conv_kernel.at(offset * n_series + series, filter);
}

std::vector<NamedTensor> named_tensors(AttnLstmParams& p) {
    return {
        {"conv.kernel", &p.conv_kernel}, {"conv.bias", &p.conv_bias},
        {"lstm.wx", &p.lstm.wx},         {"lstm.wh", &p.lstm.wh},
        {"lstm.b", &p.lstm.b},           {"attn.w", &p.attn_w},
        {"attn.b", &p.attn_b},           {"attn.u", &p.attn_u},
        {"head.w", &p.head_w},           {"head.b", &p.head_b},
    };
}

std::vector<NamedTensor> named_tensors(VanillaParams& p) {
    return {
        {"lstm.wx", &p.lstm.wx}, {"lstm.wh", &p.lstm.wh}, {"lstm.b", &p.lstm.b},
        {"head.w", &p.head_w},   {"head.b", &p.head_b},
    };
}

namespace {

Tensor glorot(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in,
              std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t({rows, cols});
    for (auto& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

LstmWeights init_lstm(Rng& rng, std::size_t in, std::size_t hidden) {
    LstmWeights w;
    w.wx = glorot(rng, in, 4 * hidden, in, 4 * hidden);
    w.wh = glorot(rng, hidden, 4 * hidden, hidden, 4 * hidden);
    w.b = Tensor({1, 4 * hidden}, 0.0);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) w.b[j] = 1.0;
    return w;
}

}  // namespace

AttnLstmParams init_params(const ModelConfig& c, std::uint64_t seed) {
    c.validate();
    Rng rng(seed);
    const std::size_t n = c.n_inputs, F = c.conv_filters, k = c.conv_kernel, H = c.lstm_hidden;
    AttnLstmParams p;
    p.conv_kernel = glorot(rng, k * n, F, n * k, F * k);
    p.conv_bias = Tensor({1, F}, 0.0);
    p.lstm = init_lstm(rng, n + F, H);
    p.attn_w = glorot(rng, 2 * H, H, 2 * H, H);
    p.attn_b = Tensor({1, H}, 0.0);
    p.attn_u = glorot(rng, H, 1, H, 1);
    p.head_w = glorot(rng, 2 * H, 1, 2 * H, 1);
    p.head_b = Tensor({1, 1}, 0.0);
    return p;
}

VanillaParams init_vanilla_params(const ModelConfig& c, std::uint64_t seed) {
    c.validate();
    Rng rng(seed);
    VanillaParams p;
    p.lstm = init_lstm(rng, c.n_inputs, c.lstm_hidden);
    p.head_w = glorot(rng, c.lstm_hidden, 1, c.lstm_hidden, 1);
    p.head_b = Tensor({1, 1}, 0.0);
    return p;
}

AttnParamNodes add_params(Graph& g, const AttnLstmParams& p) {
    AttnParamNodes n;
    n.conv_kernel = g.input(p.conv_kernel);
    n.conv_bias = g.input(p.conv_bias);
    n.lstm = {g.input(p.lstm.wx), g.input(p.lstm.wh), g.input(p.lstm.b)};
    n.attn_w = g.input(p.attn_w);
    n.attn_b = g.input(p.attn_b);
    n.attn_u = g.input(p.attn_u);
    n.head_w = g.input(p.head_w);
    n.head_b = g.input(p.head_b);
    return n;
}

VanillaParamNodes add_params(Graph& g, const VanillaParams& p) {
    VanillaParamNodes n;
    n.lstm = {g.input(p.lstm.wx), g.input(p.lstm.wh), g.input(p.lstm.b)};
    n.head_w = g.input(p.head_w);
    n.head_b = g.input(p.head_b);
    return n;
}

NodeId conv1d_causal(Graph& g, NodeId kernel, NodeId bias, NodeId x, std::size_t batch,
                     std::size_t kernel_width) {
    const Tensor& xv = g.value(x);
    const std::size_t rows = xv.rows(), n = xv.cols();
    if (batch == 0 || rows % batch != 0) {
        throw ShapeError("conv1d: " + std::to_string(rows) + " rows not divisible by batch " +
                         std::to_string(batch));
    }
    const Tensor& kv = g.value(kernel);
    if (kv.rows() != kernel_width * n) {
        throw ShapeError("conv1d: kernel " + shape_str(kv.shape()) + " does not match " +
                         std::to_string(kernel_width) + " taps over " + std::to_string(n) +
                         " series");
    }
    const std::size_t steps = rows / batch;
    std::vector<NodeId> taps;
    taps.reserve(kernel_width);
    for (std::size_t d = 0; d < kernel_width; ++d) {
        const std::size_t shift = kernel_width - 1 - d;
        if (shift == 0) {
            taps.push_back(x);
        } else if (shift >= steps) {
            taps.push_back(g.input(Tensor({rows, n}, 0.0)));
        } else {
            const NodeId pad = g.input(Tensor({shift * batch, n}, 0.0));
            const NodeId kept = g.slice(x, 0, 0, (steps - shift) * batch);
            const NodeId parts[] = {pad, kept};
            taps.push_back(g.concat(parts, 0));
        }
    }
    const NodeId cols = kernel_width == 1 ? taps[0] : g.concat(taps, 1);
    return g.relu(g.add(g.matmul(cols, kernel), bias));
}

std::vector<NodeId> lstm_forward(Graph& g, const LstmNodes& w, NodeId z, std::size_t batch) {
    const std::size_t rows = g.value(z).rows();
    if (batch == 0 || rows % batch != 0) {
        throw ShapeError("lstm: " + std::to_string(rows) + " rows not divisible by batch " +
                         std::to_string(batch));
    }
    const std::size_t steps = rows / batch;
    const std::size_t H = g.value(w.wh).rows();
    if (g.value(w.wh).cols() != 4 * H || g.value(w.b).cols() != 4 * H) {
        throw ShapeError("lstm: recurrent weights " + shape_str(g.value(w.wh).shape()) +
                         " inconsistent with bias " + shape_str(g.value(w.b).shape()));
    }
    const NodeId pre = g.matmul(z, w.wx);

    std::vector<NodeId> hidden;
    hidden.reserve(steps);
    NodeId h{}, c{};
    for (std::size_t i = 0; i < steps; ++i) {
        NodeId gates = steps == 1 ? pre : g.slice(pre, 0, i * batch, (i + 1) * batch);
        if (i > 0) gates = g.add(gates, g.matmul(h, w.wh));
        gates = g.add(gates, w.b);
        const NodeId in_gate = g.sigmoid(g.slice(gates, 1, 0, H));
        const NodeId forget = g.sigmoid(g.slice(gates, 1, H, 2 * H));
        const NodeId cand = g.tanh(g.slice(gates, 1, 2 * H, 3 * H));
        const NodeId out_gate = g.sigmoid(g.slice(gates, 1, 3 * H, 4 * H));
        const NodeId written = g.mul(in_gate, cand);
        c = i == 0 ? written : g.add(g.mul(forget, c), written);
        h = g.mul(out_gate, g.tanh(c));
        hidden.push_back(h);
    }
    return hidden;
}

AttentionNodes attention(Graph& g, NodeId attn_w, NodeId attn_b, NodeId attn_u,
                         std::span<const NodeId> hidden) {
    if (hidden.size() < 2) throw ShapeError("attention: needs at least 2 hidden states");
    const std::size_t H = g.value(hidden.back()).cols();
    if (g.value(attn_w).rows() != 2 * H) {
        throw ShapeError("attention: projection " + shape_str(g.value(attn_w).shape()) +
                         " does not match hidden width " + std::to_string(H));
    }
    const NodeId w_past = g.slice(attn_w, 0, 0, H);
    const NodeId w_now = g.slice(attn_w, 0, H, 2 * H);
    const NodeId query = g.add(g.matmul(hidden.back(), w_now), attn_b);

    const std::size_t prev = hidden.size() - 1;
    std::vector<NodeId> scores;
    scores.reserve(prev);
    for (std::size_t i = 0; i < prev; ++i) {
        const NodeId act = g.tanh(g.add(g.matmul(hidden[i], w_past), query));
        scores.push_back(g.matmul(act, attn_u));
    }
    const NodeId logits = prev == 1 ? scores[0] : g.concat(scores, 1);
    const NodeId alpha = g.softmax(logits, 1);

    NodeId context{};
    for (std::size_t i = 0; i < prev; ++i) {
        const NodeId weight = prev == 1 ? alpha : g.slice(alpha, 1, i, i + 1);
        const NodeId term = g.mul(hidden[i], weight);
        context = i == 0 ? term : g.add(context, term);
    }
    return {alpha, context};
}

AttnForwardNodes build_forward(Graph& g, const AttnLstmParams& p, Tensor x_batched,
                               std::size_t batch, std::size_t kernel_width) {
    AttnForwardNodes out;
    out.params = add_params(g, p);
    out.x = g.input(std::move(x_batched));
    out.conv = conv1d_causal(g, out.params.conv_kernel, out.params.conv_bias, out.x, batch,
                             kernel_width);
    const NodeId parts[] = {out.x, out.conv};
    const NodeId z = g.concat(parts, 1);
    out.hidden = lstm_forward(g, out.params.lstm, z, batch);
    out.attn = attention(g, out.params.attn_w, out.params.attn_b, out.params.attn_u, out.hidden);
    const NodeId joined[] = {out.hidden.back(), out.attn.context};
    out.prediction =
        g.add(g.matmul(g.concat(joined, 1), out.params.head_w), out.params.head_b);
    return out;
}

VanillaForwardNodes build_vanilla_forward(Graph& g, const VanillaParams& p, Tensor x_batched,
                                          std::size_t batch) {
    VanillaForwardNodes out;
    out.params = add_params(g, p);
    out.x = g.input(std::move(x_batched));
    out.hidden = lstm_forward(g, out.params.lstm, out.x, batch);
    out.prediction = g.add(g.matmul(out.hidden.back(), out.params.head_w), out.params.head_b);
    return out;
}

Tensor stack_windows(std::span<const Tensor* const> windows) {
    if (windows.empty()) throw ShapeError("stack_windows: no windows");
    const Shape& shape = windows.front()->shape();
    const std::size_t B = windows.size(), W = shape[0], n = shape[1];
    Tensor out({W * B, n});
    for (std::size_t b = 0; b < B; ++b) {
        if (windows[b]->shape() != shape) {
            throw ShapeError("stack_windows: window " + shape_str(windows[b]->shape()) +
                             " differs from " + shape_str(shape));
        }
        for (std::size_t i = 0; i < W; ++i)
            for (std::size_t j = 0; j < n; ++j) out.at(i * B + b, j) = windows[b]->at(i, j);
    }
    return out;
}

Tensor conv1d_causal(const AttnLstmParams& p, const Tensor& x, std::size_t kernel_width) {
    Graph g;
    const NodeId k = g.input(p.conv_kernel);
    const NodeId b = g.input(p.conv_bias);
    const NodeId xi = g.input(x);
    return g.value(conv1d_causal(g, k, b, xi, 1, kernel_width));
}

Tensor lstm_forward(const LstmWeights& w, const Tensor& z) {
    Graph g;
    const LstmNodes nodes{g.input(w.wx), g.input(w.wh), g.input(w.b)};
    const auto hidden = lstm_forward(g, nodes, g.input(z), 1);
    std::vector<const Tensor*> rows;
    for (auto h : hidden) rows.push_back(&g.value(h));
    std::vector<double> data;
    for (const auto* r : rows) data.insert(data.end(), r->data().begin(), r->data().end());
    return Tensor({hidden.size(), rows.front()->cols()}, std::move(data));
}

AttentionResult attention(const AttnLstmParams& p, const Tensor& hidden_states) {
    Graph g;
    std::vector<NodeId> hidden;
    for (std::size_t i = 0; i < hidden_states.rows(); ++i) {
        const auto row = hidden_states.data().subspan(i * hidden_states.cols(), hidden_states.cols());
        hidden.push_back(g.input(Tensor::row(row)));
    }
    const auto nodes =
        attention(g, g.input(p.attn_w), g.input(p.attn_b), g.input(p.attn_u), hidden);
    const auto a = g.value(nodes.alpha).data();
    const auto v = g.value(nodes.context).data();
    return {{a.begin(), a.end()}, {v.begin(), v.end()}};
}

namespace {

void check_window_shape(const ModelConfig& c, const Tensor& x) {
    if (x.rank() != 2 || x.rows() != c.window || x.cols() != c.n_inputs) {
        throw ShapeError("window " + shape_str(x.shape()) + " does not match config [" +
                         std::to_string(c.window) + "x" + std::to_string(c.n_inputs) + "]");
    }
}

}  // namespace

ForwardTrace forward(const AttnLstmParams& p, const ModelConfig& config, const Tensor& x_window,
                     GradMode mode) {
    check_window_shape(config, x_window);
    auto g = std::make_shared<Graph>(mode);
    ForwardTrace t;
    t.nodes = build_forward(*g, p, x_window, 1, config.conv_kernel);
    const std::size_t H = config.lstm_hidden;
    t.hidden_states = Tensor({t.nodes.hidden.size(), H});
    for (std::size_t i = 0; i < t.nodes.hidden.size(); ++i) {
        const auto h = g->value(t.nodes.hidden[i]).data();
        std::copy(h.begin(), h.end(), t.hidden_states.ptr() + i * H);
    }
    const auto a = g->value(t.nodes.attn.alpha).data();
    t.alpha.assign(a.begin(), a.end());
    const auto v = g->value(t.nodes.attn.context).data();
    t.context.assign(v.begin(), v.end());
    t.prediction = g->value(t.nodes.prediction).item();
    t.graph = std::move(g);
    return t;
}

double vanilla_forward(const VanillaParams& p, const ModelConfig& config,
                       const Tensor& x_window) {
    check_window_shape(config, x_window);
    Graph g;
    return g.value(build_vanilla_forward(g, p, x_window, 1).prediction).item();
}

Model::Model(ModelKind kind, ModelConfig config) : kind_(kind), config_(config) {
    if (kind == ModelKind::Attention) {
        params_ = init_params(config_, config_.seed);
    } else {
        params_ = init_vanilla_params(config_, config_.seed);
    }
}

Model::Model(ModelKind kind, ModelConfig config,
             std::variant<AttnLstmParams, VanillaParams> params)
    : kind_(kind), config_(config), params_(std::move(params)) {}

Model Model::attention(ModelConfig config, AttnLstmParams params) {
    return Model(ModelKind::Attention, config, std::move(params));
}

Model Model::vanilla(ModelConfig config, VanillaParams params) {
    return Model(ModelKind::Vanilla, config, std::move(params));
}

const AttnLstmParams& Model::attention_params() const {
    if (kind_ != ModelKind::Attention) {
        throw ValidationError("no attention available: model is a vanilla LSTM");
    }
    return std::get<AttnLstmParams>(params_);
}

const VanillaParams& Model::vanilla_params() const { return std::get<VanillaParams>(params_); }

std::vector<NamedTensor> Model::parameters() {
    return std::visit([](auto& p) { return named_tensors(p); }, params_);
}

std::vector<std::pair<std::string, const Tensor*>> Model::parameters() const {
    auto named = const_cast<Model*>(this)->parameters();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(named.size());
    for (auto& nt : named) out.emplace_back(nt.name, nt.tensor);
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t total = 0;
    for (const auto& [name, t] : parameters()) total += t->size();
    return total;
}

NodeId Model::build(Graph& g, Tensor x_batched, std::size_t batch,
                    std::vector<NodeId>& param_nodes) const {
    if (kind_ == ModelKind::Attention) {
        const auto nodes = build_forward(g, std::get<AttnLstmParams>(params_), std::move(x_batched),
                                         batch, config_.conv_kernel);
        const auto& p = nodes.params;
        param_nodes.insert(param_nodes.end(),
                           {p.conv_kernel, p.conv_bias, p.lstm.wx, p.lstm.wh, p.lstm.b, p.attn_w,
                            p.attn_b, p.attn_u, p.head_w, p.head_b});
        return nodes.prediction;
    }
    const auto nodes =
        build_vanilla_forward(g, std::get<VanillaParams>(params_), std::move(x_batched), batch);
    const auto& p = nodes.params;
    param_nodes.insert(param_nodes.end(), {p.lstm.wx, p.lstm.wh, p.lstm.b, p.head_w, p.head_b});
    return nodes.prediction;
}

void Model::check_window(const Tensor& window) const { check_window_shape(config_, window); }

std::vector<double> Model::predict(std::span<const Tensor* const> windows) const {
    for (const auto* w : windows) check_window(*w);
    Graph g;
    std::vector<NodeId> unused;
    const NodeId pred = build(g, stack_windows(windows), windows.size(), unused);
    const auto v = g.value(pred).data();
    return {v.begin(), v.end()};
}

double Model::predict(const Tensor& window) const {
    const Tensor* w[] = {&window};
    return predict(w).front();
}

}  // namespace lagsight
