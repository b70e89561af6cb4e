#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "lagsight/error.hpp"
#include "lagsight/model.hpp"
#include "test_util.hpp"

using namespace lagsight;
using lagsight::testing::random_tensor;
using lagsight::testing::weighted_sum;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.n_inputs = 2;
    c.window = 6;
    c.horizon_steps = 1;
    c.conv_filters = 2;
    c.conv_kernel = 2;
    c.lstm_hidden = 3;
    c.seed = 17;
    return c;
}

// Glorot draws are small; scale them up so gates and attention scores move
// away from their linear regime and the checks exercise real curvature.
AttnLstmParams lively_params(const ModelConfig& c, std::uint64_t seed) {
    AttnLstmParams p = init_params(c, seed);
    Rng rng(seed + 1000);
    for (auto& nt : named_tensors(p))
        for (auto& v : nt.tensor->data()) v = rng.uniform(-0.8, 0.8);
    return p;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop evaluation of the whole architecture, independent of the graph.
struct Reference {
    std::vector<std::vector<double>> h;  // W x H
    std::vector<double> alpha;
    std::vector<double> context;
    double prediction = 0.0;
};

Reference reference_forward(const AttnLstmParams& p, const ModelConfig& c, const Tensor& x) {
    const std::size_t W = c.window, n = c.n_inputs, F = c.conv_filters, k = c.conv_kernel,
                      H = c.lstm_hidden;
    Reference r;
    std::vector<double> hprev(H, 0.0), cell(H, 0.0);
    for (std::size_t i = 0; i < W; ++i) {
        std::vector<double> z(n + F);
        for (std::size_t j = 0; j < n; ++j) z[j] = x.at(i, j);
        for (std::size_t f = 0; f < F; ++f) {
            double acc = p.conv_bias.at(0, f);
            for (std::size_t d = 0; d < k; ++d) {
                const long row = static_cast<long>(i) - static_cast<long>(k - 1) + static_cast<long>(d);
                if (row < 0) continue;
                for (std::size_t j = 0; j < n; ++j) acc += p.conv_tap(f, j, d) * x.at(row, j);
            }
            z[n + f] = std::max(acc, 0.0);
        }
        std::vector<double> gates(4 * H);
        for (std::size_t q = 0; q < 4 * H; ++q) {
            double acc = p.lstm.b.at(0, q);
            for (std::size_t m = 0; m < n + F; ++m) acc += z[m] * p.lstm.wx.at(m, q);
            for (std::size_t m = 0; m < H; ++m) acc += hprev[m] * p.lstm.wh.at(m, q);
            gates[q] = acc;
        }
        std::vector<double> h(H);
        for (std::size_t d = 0; d < H; ++d) {
            const double ig = sigmoid(gates[d]), fg = sigmoid(gates[H + d]),
                         gg = std::tanh(gates[2 * H + d]), og = sigmoid(gates[3 * H + d]);
            cell[d] = fg * cell[d] + ig * gg;
            h[d] = og * std::tanh(cell[d]);
        }
        r.h.push_back(h);
        hprev = h;
    }
    std::vector<double> e(W - 1);
    for (std::size_t i = 0; i + 1 < W; ++i) {
        double score = 0.0;
        for (std::size_t q = 0; q < H; ++q) {
            double a = p.attn_b.at(0, q);
            for (std::size_t d = 0; d < H; ++d)
                a += r.h[i][d] * p.attn_w.at(d, q) + r.h[W - 1][d] * p.attn_w.at(H + d, q);
            score += p.attn_u.at(q, 0) * std::tanh(a);
        }
        e[i] = score;
    }
    const double mx = *std::max_element(e.begin(), e.end());
    double total = 0.0;
    for (auto& v : e) total += (v = std::exp(v - mx));
    for (auto& v : e) v /= total;
    r.alpha = e;
    r.context.assign(H, 0.0);
    for (std::size_t i = 0; i + 1 < W; ++i)
        for (std::size_t d = 0; d < H; ++d) r.context[d] += r.alpha[i] * r.h[i][d];
    r.prediction = p.head_b.at(0, 0);
    for (std::size_t d = 0; d < H; ++d)
        r.prediction += p.head_w.at(d, 0) * r.h[W - 1][d] + p.head_w.at(H + d, 0) * r.context[d];
    return r;
}

// Mirrors build_forward over caller-supplied parameter nodes, so any one
// parameter can be the grad_check leaf.
NodeId attention_loss(Graph& g, const AttnParamNodes& pn, NodeId x, std::size_t k, double y) {
    const NodeId conv = conv1d_causal(g, pn.conv_kernel, pn.conv_bias, x, 1, k);
    const NodeId parts[] = {x, conv};
    const auto hidden = lstm_forward(g, pn.lstm, g.concat(parts, 1), 1);
    const auto attn = attention(g, pn.attn_w, pn.attn_b, pn.attn_u, hidden);
    const NodeId joined[] = {hidden.back(), attn.context};
    const NodeId pred = g.add(g.matmul(g.concat(joined, 1), pn.head_w), pn.head_b);
    const NodeId diff = g.add(pred, g.input(Tensor::scalar(-y)));
    return g.mul(diff, diff);
}

}  // namespace

TEST(Init, SameSeedIsBitIdentical) {
    ModelConfig c;
    c.window = 20;
    AttnLstmParams a = init_params(c, 5), b = init_params(c, 5), d = init_params(c, 6);
    auto na = named_tensors(a), nb = named_tensors(b), nd = named_tensors(d);
    ASSERT_EQ(na.size(), nb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < na.size(); ++i) {
        EXPECT_EQ(na[i].name, nb[i].name);
        EXPECT_EQ(*na[i].tensor, *nb[i].tensor) << na[i].name;
        if (!(*na[i].tensor == *nd[i].tensor)) any_diff = true;
    }
    EXPECT_TRUE(any_diff);
}

TEST(Init, BiasesZeroExceptForgetGate) {
    ModelConfig c;
    c.lstm_hidden = 5;
    const AttnLstmParams p = init_params(c, 1);
    for (std::size_t q = 0; q < 20; ++q) EXPECT_EQ(p.lstm.b.at(0, q), (q >= 5 && q < 10) ? 1.0 : 0.0);
    for (double v : p.conv_bias.data()) EXPECT_EQ(v, 0.0);
    for (double v : p.attn_b.data()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(p.head_b.item(), 0.0);
    const VanillaParams vp = init_vanilla_params(c, 1);
    for (std::size_t q = 0; q < 20; ++q) EXPECT_EQ(vp.lstm.b.at(0, q), (q >= 5 && q < 10) ? 1.0 : 0.0);
}

TEST(Init, ShapesFollowConfig) {
    ModelConfig c;  // n=3, F=16, k=7, H=64
    const AttnLstmParams p = init_params(c, 0);
    EXPECT_EQ(p.conv_kernel.shape(), (Shape{21, 16}));
    EXPECT_EQ(p.conv_bias.shape(), (Shape{1, 16}));
    EXPECT_EQ(p.lstm.wx.shape(), (Shape{19, 256}));
    EXPECT_EQ(p.lstm.wh.shape(), (Shape{64, 256}));
    EXPECT_EQ(p.attn_w.shape(), (Shape{128, 64}));
    EXPECT_EQ(p.attn_u.shape(), (Shape{64, 1}));
    EXPECT_EQ(p.head_w.shape(), (Shape{128, 1}));
}

TEST(Init, ConvKernelWithinGlorotBound) {
    // Bound recomputed from fan_in = n*k = 21 and fan_out = F*k = 112.
    const double bound = std::sqrt(6.0 / (3.0 * 7.0 + 16.0 * 7.0));
    EXPECT_NEAR(bound, 0.21239769762143662, 1e-15);
    ModelConfig c;
    double max_abs = 0.0, mean = 0.0;
    std::size_t draws = 0;
    for (std::uint64_t seed = 0; draws < 10000; ++seed) {
        const AttnLstmParams p = init_params(c, seed);
        for (double v : p.conv_kernel.data()) {
            max_abs = std::max(max_abs, std::abs(v));
            mean += v;
            ++draws;
        }
    }
    mean /= static_cast<double>(draws);
    EXPECT_LE(max_abs, bound);
    EXPECT_GT(max_abs, 0.99 * bound);  // the bound is actually reached, not a tighter one
    EXPECT_NEAR(mean, 0.0, 0.01);
}

TEST(Config, Validation) {
    ModelConfig c;
    c.window = 1;
    EXPECT_THROW(c.validate(), ValidationError);
    c = ModelConfig{};
    c.lstm_hidden = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = ModelConfig{};
    c.horizon_steps = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    EXPECT_NO_THROW(ModelConfig{}.validate());
    EXPECT_EQ(parse_model_kind("vanilla"), ModelKind::Vanilla);
    EXPECT_THROW(parse_model_kind("gru"), ValidationError);
}

TEST(Conv, KernelOnePassthrough) {
    ModelConfig c = tiny_config();
    c.conv_kernel = 1;
    c.conv_filters = 1;
    AttnLstmParams p = init_params(c, 0);
    p.conv_kernel = Tensor::matrix({{1.0}, {0.0}});
    p.conv_bias = Tensor::scalar(0.25);
    const Tensor x = Tensor::matrix({{1, 9}, {-2, 9}, {0.5, 9}});
    const Tensor u = conv1d_causal(p, x, 1);
    EXPECT_EQ(u, Tensor::matrix({{1.25}, {0.0}, {0.75}}));
}

TEST(Conv, ZerosGiveZeros) {
    const ModelConfig c = tiny_config();
    const AttnLstmParams p = init_params(c, 3);
    const Tensor u = conv1d_causal(p, Tensor({6, 2}, 0.0), c.conv_kernel);
    EXPECT_EQ(u, Tensor({6, 2}, 0.0));
}

TEST(Conv, MatchesDirectSum) {
    ModelConfig c = tiny_config();
    c.conv_kernel = 3;
    c.conv_filters = 4;
    c.n_inputs = 3;
    const AttnLstmParams p = lively_params(c, 9);
    Rng rng(2);
    const Tensor x = random_tensor(rng, 6, 3);
    const Tensor u = conv1d_causal(p, x, 3);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t f = 0; f < 4; ++f) {
            double acc = p.conv_bias.at(0, f);
            for (std::size_t d = 0; d < 3; ++d) {
                const long row = static_cast<long>(i) - 2 + static_cast<long>(d);
                if (row < 0) continue;
                for (std::size_t j = 0; j < 3; ++j) acc += p.conv_tap(f, j, d) * x.at(row, j);
            }
            EXPECT_NEAR(u.at(i, f), std::max(acc, 0.0), 1e-14);
        }
}

TEST(Conv, CausalityProbe) {
    ModelConfig c = tiny_config();
    c.conv_kernel = 4;
    c.conv_filters = 5;
    c.window = 10;
    const AttnLstmParams p = lively_params(c, 4);
    Rng rng(6);
    const Tensor x = random_tensor(rng, 10, 2);
    const Tensor base = conv1d_causal(p, x, 4);
    for (std::size_t i = 0; i < 10; ++i) {
        Tensor xp = x;
        xp.at(i, 0) += 3.0;
        xp.at(i, 1) -= 2.0;
        const Tensor u = conv1d_causal(p, xp, 4);
        for (std::size_t r = 0; r < i; ++r)
            for (std::size_t f = 0; f < 5; ++f) EXPECT_EQ(u.at(r, f), base.at(r, f));
    }
}

TEST(Lstm, ZeroWeightsGiveZeroStates) {
    LstmWeights w{Tensor({4, 12}, 0.0), Tensor({3, 12}, 0.0), Tensor({1, 12}, 0.0)};
    Rng rng(1);
    const Tensor h = lstm_forward(w, random_tensor(rng, 5, 4));
    EXPECT_EQ(h, Tensor({5, 3}, 0.0));
}

TEST(Lstm, SingleStepMatchesHandComputation) {
    Rng rng(12);
    LstmWeights w{random_tensor(rng, 2, 8), random_tensor(rng, 2, 8), random_tensor(rng, 1, 8)};
    const Tensor z = random_tensor(rng, 1, 2);
    const Tensor h = lstm_forward(w, z);
    ASSERT_EQ(h.shape(), (Shape{1, 2}));
    for (std::size_t d = 0; d < 2; ++d) {
        auto pre = [&](std::size_t q) {
            return w.b.at(0, q) + z.at(0, 0) * w.wx.at(0, q) + z.at(0, 1) * w.wx.at(1, q);
        };
        const double c = sigmoid(pre(d)) * std::tanh(pre(4 + d));
        EXPECT_NEAR(h.at(0, d), sigmoid(pre(6 + d)) * std::tanh(c), 1e-15);
    }
}

TEST(Attention, IdenticalStatesGiveUniformWeights) {
    const ModelConfig c = tiny_config();
    const AttnLstmParams p = lively_params(c, 2);
    Tensor hs({7, 3});
    for (std::size_t i = 0; i < 7; ++i) hs.at(i, 0) = 0.3, hs.at(i, 1) = -0.1, hs.at(i, 2) = 0.6;
    const AttentionResult r = attention(p, hs);
    ASSERT_EQ(r.alpha.size(), 6u);
    for (double a : r.alpha) EXPECT_NEAR(a, 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(r.context[2], 0.6, 1e-15);
}

TEST(Attention, ZeroScoreVectorGivesUniformWeights) {
    const ModelConfig c = tiny_config();
    AttnLstmParams p = lively_params(c, 2);
    p.attn_u.fill(0.0);
    Rng rng(3);
    const AttentionResult r = attention(p, random_tensor(rng, 5, 3));
    for (double a : r.alpha) EXPECT_DOUBLE_EQ(a, 0.25);
}

TEST(Attention, RequiresTwoStates) {
    const ModelConfig c = tiny_config();
    const AttnLstmParams p = init_params(c, 2);
    EXPECT_THROW(attention(p, Tensor({1, 3}, 0.1)), ShapeError);
}

TEST(Forward, MatchesPlainLoopReference) {
    ModelConfig c = tiny_config();
    c.window = 9;
    c.conv_kernel = 3;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const AttnLstmParams p = lively_params(c, seed);
        Rng rng(seed);
        const Tensor x = random_tensor(rng, 9, 2, -2.0, 2.0);
        const ForwardTrace t = forward(p, c, x);
        const Reference ref = reference_forward(p, c, x);
        ASSERT_EQ(t.alpha.size(), 8u);
        for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(t.alpha[i], ref.alpha[i], 1e-13);
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t d = 0; d < 3; ++d)
                EXPECT_NEAR(t.hidden_states.at(i, d), ref.h[i][d], 1e-13);
        for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(t.context[d], ref.context[d], 1e-13);
        EXPECT_NEAR(t.prediction, ref.prediction, 1e-13);
    }
}

TEST(Forward, ZeroParamsPredictZero) {
    const ModelConfig c = tiny_config();
    AttnLstmParams p = init_params(c, 1);
    for (auto& nt : named_tensors(p)) nt.tensor->fill(0.0);
    Rng rng(1);
    EXPECT_EQ(forward(p, c, random_tensor(rng, 6, 2)).prediction, 0.0);
    VanillaParams vp = init_vanilla_params(c, 1);
    for (auto& nt : named_tensors(vp)) nt.tensor->fill(0.0);
    EXPECT_EQ(vanilla_forward(vp, c, random_tensor(rng, 6, 2)), 0.0);
}

TEST(Forward, DeterministicAndPure) {
    const ModelConfig c = tiny_config();
    const AttnLstmParams p = lively_params(c, 8);
    Rng rng(4);
    const Tensor x = random_tensor(rng, 6, 2);
    const Tensor other = random_tensor(rng, 6, 2);
    const double first = forward(p, c, x).prediction;
    forward(p, c, other);
    EXPECT_EQ(forward(p, c, x).prediction, first);
}

TEST(Forward, RejectsWrongWindowShape) {
    const ModelConfig c = tiny_config();
    const Model m(ModelKind::Attention, c);
    EXPECT_THROW(m.predict(Tensor({5, 2}, 0.0)), ShapeError);
    EXPECT_THROW(m.predict(Tensor({6, 3}, 0.0)), ShapeError);
}

TEST(Forward, AlphaSimplexOnRandomPasses) {
    ModelConfig c = tiny_config();
    c.window = 12;
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const AttnLstmParams p = lively_params(c, 500 + static_cast<std::uint64_t>(trial));
        const ForwardTrace t = forward(p, c, random_tensor(rng, 12, 2, -3.0, 3.0));
        ASSERT_EQ(t.alpha.size(), 11u);
        double s = 0.0;
        for (double a : t.alpha) {
            EXPECT_GE(a, 0.0);
            s += a;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Forward, HiddenStateCausality) {
    ModelConfig c = tiny_config();
    c.window = 8;
    const AttnLstmParams p = lively_params(c, 10);
    Rng rng(10);
    const Tensor x = random_tensor(rng, 8, 2);
    const Tensor base = forward(p, c, x).hidden_states;
    for (std::size_t i = 0; i < 8; ++i) {
        Tensor xp = x;
        xp.at(i, 1) += 1.5;
        const Tensor h = forward(p, c, xp).hidden_states;
        for (std::size_t r = 0; r < 8; ++r)
            for (std::size_t d = 0; d < 3; ++d) {
                if (r < i) {
                    EXPECT_EQ(h.at(r, d), base.at(r, d));
                } else if (r == i) {
                    EXPECT_NE(h.at(r, d), base.at(r, d));
                }
            }
    }
}

TEST(Forward, ColumnPermutationSymmetry) {
    ModelConfig c = tiny_config();
    c.n_inputs = 3;
    c.window = 10;
    c.conv_kernel = 3;
    const AttnLstmParams p = lively_params(c, 31);
    Rng rng(31);
    const Tensor x = random_tensor(rng, 10, 3);
    const std::size_t a = 0, b = 2, n = 3;

    AttnLstmParams q = p;
    Tensor xs = x;
    for (std::size_t i = 0; i < 10; ++i) std::swap(xs.at(i, a), xs.at(i, b));
    for (std::size_t d = 0; d < c.conv_kernel; ++d)
        for (std::size_t f = 0; f < c.conv_filters; ++f)
            std::swap(q.conv_kernel.at(d * n + a, f), q.conv_kernel.at(d * n + b, f));
    for (std::size_t col = 0; col < q.lstm.wx.cols(); ++col)
        std::swap(q.lstm.wx.at(a, col), q.lstm.wx.at(b, col));

    const ForwardTrace t0 = forward(p, c, x), t1 = forward(q, c, xs);
    EXPECT_NEAR(t1.prediction, t0.prediction, 1e-12);
    for (std::size_t i = 0; i < t0.alpha.size(); ++i) EXPECT_NEAR(t1.alpha[i], t0.alpha[i], 1e-12);
}

TEST(Forward, BatchedMatchesSingleWindows) {
    ModelConfig c = tiny_config();
    c.window = 7;
    const Model m = Model::attention(c, lively_params(c, 3));
    Rng rng(3);
    std::vector<Tensor> windows;
    for (int b = 0; b < 5; ++b) windows.push_back(random_tensor(rng, 7, 2));
    std::vector<const Tensor*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    const std::vector<double> batched = m.predict(ptrs);
    for (std::size_t b = 0; b < 5; ++b) EXPECT_NEAR(batched[b], m.predict(windows[b]), 1e-12);
}

TEST(GradCheckModel, ConvLayer) {
    ModelConfig c = tiny_config();
    c.conv_kernel = 3;
    c.conv_filters = 3;
    const AttnLstmParams p = lively_params(c, 40);
    Rng rng(40);
    const Tensor x = random_tensor(rng, 6, 2);
    const GradCheckReport rx = grad_check(
        [&](Graph& g, NodeId xn) {
            return weighted_sum(
                g, conv1d_causal(g, g.input(p.conv_kernel), g.input(p.conv_bias), xn, 1, 3));
        },
        x);
    EXPECT_TRUE(rx.passed) << rx.message;
    const GradCheckReport rk = grad_check(
        [&](Graph& g, NodeId kn) {
            return weighted_sum(
                g, conv1d_causal(g, kn, g.input(p.conv_bias), g.input(x), 1, 3));
        },
        p.conv_kernel);
    EXPECT_TRUE(rk.passed) << rk.message;
}

TEST(GradCheckModel, OneLstmStep) {
    Rng rng(41);
    const Tensor wx = random_tensor(rng, 4, 12), wh = random_tensor(rng, 3, 12),
                 b = random_tensor(rng, 1, 12);
    auto step = [&](Graph& g, NodeId z, NodeId wxn) {
        return weighted_sum(
            g, lstm_forward(g, {wxn, g.input(wh), g.input(b)}, z, 1).back());
    };
    const Tensor z = random_tensor(rng, 1, 4);
    const GradCheckReport rz =
        grad_check([&](Graph& g, NodeId zn) { return step(g, zn, g.input(wx)); }, z);
    EXPECT_TRUE(rz.passed) << rz.message;
    const GradCheckReport rw =
        grad_check([&](Graph& g, NodeId wn) { return step(g, g.input(z), wn); }, wx);
    EXPECT_TRUE(rw.passed) << rw.message;
}

TEST(GradCheckModel, LstmSumOfStates) {
    // H = 3, W = 4: gradient of sum(H_states) with respect to the inputs and
    // the recurrent weights.
    Rng rng(42);
    const Tensor wx = random_tensor(rng, 2, 12), wh = random_tensor(rng, 3, 12),
                 b = random_tensor(rng, 1, 12);
    const Tensor z = random_tensor(rng, 4, 2);
    auto total = [](Graph& g, const std::vector<NodeId>& hs) {
        const NodeId all = g.concat(hs, 0);
        return g.sum(g.sum(all, 0), 1);
    };
    const GradCheckReport rz = grad_check(
        [&](Graph& g, NodeId zn) {
            return total(g, lstm_forward(g, {g.input(wx), g.input(wh), g.input(b)}, zn, 1));
        },
        z);
    EXPECT_TRUE(rz.passed) << rz.message;
    const GradCheckReport rh = grad_check(
        [&](Graph& g, NodeId whn) {
            return total(g, lstm_forward(g, {g.input(wx), whn, g.input(b)}, g.input(z), 1));
        },
        wh);
    EXPECT_TRUE(rh.passed) << rh.message;
}

TEST(GradCheckModel, AttentionBlock) {
    Rng rng(43);
    const Tensor W = random_tensor(rng, 6, 3), b = random_tensor(rng, 1, 3),
                 u = random_tensor(rng, 3, 1, -2.0, 2.0);
    const Tensor states = random_tensor(rng, 5, 3);
    auto block = [&](Graph& g, NodeId hs, NodeId wn) {
        std::vector<NodeId> hidden;
        for (std::size_t i = 0; i < 5; ++i) hidden.push_back(g.slice(hs, 0, i, i + 1));
        const AttentionNodes a = attention(g, wn, g.input(b), g.input(u), hidden);
        const NodeId both[] = {a.alpha, a.context};
        return weighted_sum(g, g.concat(both, 1));
    };
    const GradCheckReport rs =
        grad_check([&](Graph& g, NodeId hs) { return block(g, hs, g.input(W)); }, states);
    EXPECT_TRUE(rs.passed) << rs.message;
    const GradCheckReport rw =
        grad_check([&](Graph& g, NodeId wn) { return block(g, g.input(states), wn); }, W);
    EXPECT_TRUE(rw.passed) << rw.message;
}

TEST(GradCheckModel, FullAttentionLossEveryParameter) {
    const ModelConfig c = tiny_config();  // n=2, W=6, H=3, F=2, k=2
    const AttnLstmParams p = lively_params(c, 44);
    Rng rng(44);
    const Tensor x = random_tensor(rng, 6, 2);
    const double y = 0.4;

    {
        Graph g;
        const AttnForwardNodes fwd = build_forward(g, p, x, 1, c.conv_kernel);
        Graph h;
        const NodeId loss = attention_loss(h, add_params(h, p), h.input(x), c.conv_kernel, y);
        const double d = g.value(fwd.prediction).item() - y;
        ASSERT_EQ(h.value(loss).item(), d * d);  // the mirror builds the same network
    }

    auto params = named_tensors(const_cast<AttnLstmParams&>(p));
    for (std::size_t which = 0; which < params.size(); ++which) {
        const GradCheckReport r = grad_check(
            [&](Graph& g, NodeId leaf) {
                AttnParamNodes pn = add_params(g, p);
                NodeId* slots[] = {&pn.conv_kernel, &pn.conv_bias, &pn.lstm.wx, &pn.lstm.wh,
                                   &pn.lstm.b,      &pn.attn_w,    &pn.attn_b,  &pn.attn_u,
                                   &pn.head_w,      &pn.head_b};
                *slots[which] = leaf;
                return attention_loss(g, pn, g.input(x), c.conv_kernel, y);
            },
            *params[which].tensor);
        EXPECT_TRUE(r.passed) << params[which].name << ": " << r.message;
    }
    const GradCheckReport rx = grad_check(
        [&](Graph& g, NodeId xn) { return attention_loss(g, add_params(g, p), xn, c.conv_kernel, y); },
        x);
    EXPECT_TRUE(rx.passed) << rx.message;
}

TEST(GradCheckModel, VanillaLoss) {
    const ModelConfig c = tiny_config();
    VanillaParams p = init_vanilla_params(c, 45);
    Rng rng(45);
    for (auto& nt : named_tensors(p))
        for (auto& v : nt.tensor->data()) v = rng.uniform(-0.8, 0.8);
    const Tensor x = random_tensor(rng, 6, 2);
    auto loss = [&](Graph& g, NodeId wx, NodeId xn) {
        const auto hs = lstm_forward(g, {wx, g.input(p.lstm.wh), g.input(p.lstm.b)}, xn, 1);
        const NodeId pred = g.add(g.matmul(hs.back(), g.input(p.head_w)), g.input(p.head_b));
        const NodeId diff = g.add(pred, g.input(Tensor::scalar(-0.3)));
        return g.mul(diff, diff);
    };
    const GradCheckReport rw =
        grad_check([&](Graph& g, NodeId wx) { return loss(g, wx, g.input(x)); }, p.lstm.wx);
    EXPECT_TRUE(rw.passed) << rw.message;
    const GradCheckReport rx =
        grad_check([&](Graph& g, NodeId xn) { return loss(g, g.input(p.lstm.wx), xn); }, x);
    EXPECT_TRUE(rx.passed) << rx.message;
}

TEST(ModelClass, ParameterCountFormula) {
    ModelConfig c;  // n=3, H=64, F=16, k=7, W=500
    const Model m(ModelKind::Attention, c);
    const std::size_t conv = 16 * 3 * 7 + 16;
    // Input weights over n + F = 19 features, recurrent weights, biases.
    const std::size_t lstm = 4 * (19 * 64 + 64 * 64 + 64);
    const std::size_t attn = 128 * 64 + 64 + 64;
    const std::size_t head = 128 + 1;
    EXPECT_EQ(m.parameter_count(), conv + lstm + attn + head);
    EXPECT_EQ(m.parameter_count(), 30305u);
    const Model v(ModelKind::Vanilla, c);
    EXPECT_EQ(v.parameter_count(), 4u * (3 * 64 + 64 * 64 + 64) + 64 + 1);
}

TEST(ModelClass, VanillaHasNoAttention) {
    const Model v(ModelKind::Vanilla, tiny_config());
    try {
        v.attention_params();
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("no attention available"), std::string::npos);
    }
}

TEST(ModelClass, SeededConstructionIsDeterministic) {
    const Model a(ModelKind::Attention, tiny_config()), b(ModelKind::Attention, tiny_config());
    Rng rng(1);
    const Tensor x = random_tensor(rng, 6, 2);
    EXPECT_EQ(a.predict(x), b.predict(x));
}
