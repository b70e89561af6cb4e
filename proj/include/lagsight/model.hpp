#pragma once

// Attention LSTM forecaster and the plain-LSTM baseline.
//
// Batched inputs use a step-major layout: a batch of B windows of W steps and
// n series is a (W*B) x n matrix whose row i*B + b is step i of window b. For
// B == 1 this is the window itself.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lagsight/autodiff.hpp"
#include "lagsight/tensor.hpp"

namespace lagsight {

struct ModelConfig {
    std::size_t n_inputs = 3;
    std::size_t window = 500;
    std::size_t horizon_steps = 180;
    std::size_t conv_filters = 16;
    std::size_t conv_kernel = 7;
    std::size_t lstm_hidden = 64;
    std::uint64_t seed = 0;

    // Throws ValidationError on window < 2 or any zero count.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

enum class ModelKind { Attention, Vanilla };

const char* to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(const std::string& s);

// Gate blocks along the 4H axis are ordered input, forget, candidate, output.
struct LstmWeights {
    Tensor wx;  // in x 4H
    Tensor wh;  // H x 4H
    Tensor b;   // 1 x 4H
};

struct AttnLstmParams {
    // Causal conv kernel in im2col layout, (k*n) x F: row d*n + j, column f
    // holds the tap for filter f, series j and offset d, where offset k-1
    // reads the current step.
    Tensor conv_kernel;
    Tensor conv_bias;  // 1 x F
    LstmWeights lstm;  // over n + F inputs
    Tensor attn_w;     // 2H x H; first H rows act on h_i, last H on the current state
    Tensor attn_b;     // 1 x H
    Tensor attn_u;     // H x 1
    Tensor head_w;     // 2H x 1 over [h_W ; v]
    Tensor head_b;     // 1 x 1

    double conv_tap(std::size_t filter, std::size_t series, std::size_t offset) const;
};

struct VanillaParams {
    LstmWeights lstm;  // over n inputs
    Tensor head_w;     // H x 1
    Tensor head_b;     // 1 x 1
};

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

std::vector<NamedTensor> named_tensors(AttnLstmParams& p);
std::vector<NamedTensor> named_tensors(VanillaParams& p);

AttnLstmParams init_params(const ModelConfig& config, std::uint64_t seed);
VanillaParams init_vanilla_params(const ModelConfig& config, std::uint64_t seed);

// Graph-level building blocks ------------------------------------------------

struct LstmNodes {
    NodeId wx, wh, b;
};

struct AttnParamNodes {
    NodeId conv_kernel, conv_bias;
    LstmNodes lstm;
    NodeId attn_w, attn_b, attn_u, head_w, head_b;
};

struct VanillaParamNodes {
    LstmNodes lstm;
    NodeId head_w, head_b;
};

AttnParamNodes add_params(Graph& g, const AttnLstmParams& p);
VanillaParamNodes add_params(Graph& g, const VanillaParams& p);

NodeId conv1d_causal(Graph& g, NodeId kernel, NodeId bias, NodeId x, std::size_t batch,
                     std::size_t kernel_width);

// Returns one B x H node per step.
std::vector<NodeId> lstm_forward(Graph& g, const LstmNodes& w, NodeId z, std::size_t batch);

struct AttentionNodes {
    NodeId alpha;    // B x (W-1)
    NodeId context;  // B x H
};

AttentionNodes attention(Graph& g, NodeId attn_w, NodeId attn_b, NodeId attn_u,
                         std::span<const NodeId> hidden);

struct AttnForwardNodes {
    AttnParamNodes params;
    NodeId x;
    NodeId conv;
    std::vector<NodeId> hidden;
    AttentionNodes attn;
    NodeId prediction;  // B x 1
};

AttnForwardNodes build_forward(Graph& g, const AttnLstmParams& p, Tensor x_batched,
                               std::size_t batch, std::size_t kernel_width);

struct VanillaForwardNodes {
    VanillaParamNodes params;
    NodeId x;
    std::vector<NodeId> hidden;
    NodeId prediction;
};

VanillaForwardNodes build_vanilla_forward(Graph& g, const VanillaParams& p, Tensor x_batched,
                                          std::size_t batch);

// Stacks W x n windows into the step-major batch layout.
Tensor stack_windows(std::span<const Tensor* const> windows);

// Single-window conveniences ---------------------------------------------------

Tensor conv1d_causal(const AttnLstmParams& p, const Tensor& x, std::size_t kernel_width);
Tensor lstm_forward(const LstmWeights& w, const Tensor& z);  // W x H

struct AttentionResult {
    std::vector<double> alpha;  // W-1
    std::vector<double> context;
};
AttentionResult attention(const AttnLstmParams& p, const Tensor& hidden_states);

struct ForwardTrace {
    Tensor hidden_states;        // W x H
    std::vector<double> alpha;   // W-1
    std::vector<double> context; // H
    double prediction = 0.0;

    std::shared_ptr<const Graph> graph;
    AttnForwardNodes nodes;
};

ForwardTrace forward(const AttnLstmParams& p, const ModelConfig& config, const Tensor& x_window,
                     GradMode mode = GradMode::Standard);

double vanilla_forward(const VanillaParams& p, const ModelConfig& config,
                       const Tensor& x_window);

// A model of either kind with its configuration.
class Model {
public:
    Model(ModelKind kind, ModelConfig config);  // seeded from config.seed

    static Model attention(ModelConfig config, AttnLstmParams params);
    static Model vanilla(ModelConfig config, VanillaParams params);

    ModelKind kind() const noexcept { return kind_; }
    const ModelConfig& config() const noexcept { return config_; }

    const AttnLstmParams& attention_params() const;
    const VanillaParams& vanilla_params() const;

    std::vector<NamedTensor> parameters();
    std::vector<std::pair<std::string, const Tensor*>> parameters() const;
    std::size_t parameter_count() const;

    // Adds parameter leaves (appended to `param_nodes`, in parameters()
    // order) and the batched forward pass; returns the B x 1 prediction node.
    NodeId build(Graph& g, Tensor x_batched, std::size_t batch,
                 std::vector<NodeId>& param_nodes) const;

    std::vector<double> predict(std::span<const Tensor* const> windows) const;
    double predict(const Tensor& window) const;

    // Checks a W x n window against the configuration.
    void check_window(const Tensor& window) const;

private:
    Model(ModelKind kind, ModelConfig config, std::variant<AttnLstmParams, VanillaParams> params);

    ModelKind kind_;
    ModelConfig config_;
    std::variant<AttnLstmParams, VanillaParams> params_;
};

}  // namespace lagsight
