#pragma once

// Tape-based reverse-mode differentiation over rank-2 tensors.
//
// A Graph records every primitive application in order. Nodes only refer to
// earlier nodes, so the tape is acyclic and a reverse sweep over indices is a
// valid topological order. Once built, a graph is read-only: backward passes
// never mutate it and may run concurrently.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lagsight/tensor.hpp"

namespace lagsight {

enum class Op : std::uint8_t {
    Input,
    MatMul,
    Add,
    Mul,
    Concat,
    Slice,
    Sigmoid,
    Tanh,
    Relu,
    Softmax,
    Sum,
    Scale,
};

const char* op_name(Op op) noexcept;

enum class GradMode : std::uint8_t { Standard, Guided };

struct NodeId {
    std::uint32_t index = 0;
    bool operator==(const NodeId&) const = default;
};

// Attributes used by axis/range/scalar primitives; unused fields stay zero.
struct OpAttrs {
    int axis = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    double factor = 1.0;
};

class GradientMap {
public:
    void emplace(NodeId id, Tensor grad);
    const Tensor& operator[](NodeId id) const;
    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::vector<std::pair<NodeId, Tensor>> entries_;
};

class Graph {
public:
    explicit Graph(GradMode mode = GradMode::Standard) : mode_(mode) {}

    GradMode mode() const noexcept { return mode_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    NodeId input(Tensor value);

    // Generic entry point; the named helpers below forward to it.
    //
    // Broadcasting: for add and mul the second operand may match the first,
    // or be 1xC (row broadcast), Rx1 (column broadcast) or 1x1.
    NodeId apply(Op op, std::span<const NodeId> inputs, const OpAttrs& attrs = {});

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId concat(std::span<const NodeId> parts, int axis);
    NodeId slice(NodeId a, int axis, std::size_t begin, std::size_t end);
    NodeId sigmoid(NodeId a);
    NodeId tanh(NodeId a);
    NodeId relu(NodeId a);
    NodeId softmax(NodeId a, int axis);
    NodeId sum(NodeId a, int axis);
    NodeId scale(NodeId a, double factor);

    const Tensor& value(NodeId id) const;
    Op op(NodeId id) const;
    std::span<const NodeId> inputs(NodeId id) const;

    // Standard reverse accumulation. Requires mode() == Standard.
    GradientMap backward(NodeId seed, std::span<const NodeId> wrt) const;

    // Like backward, but at every sigmoid/tanh/relu node the gradient left
    // after applying the local derivative has its negative entries zeroed.
    // Requires mode() == Guided.
    GradientMap guided_backward(NodeId seed, std::span<const NodeId> wrt) const;

    // Rebuilds the tape from its recorded input values.
    Graph replay() const;

private:
    struct Node {
        Op op = Op::Input;
        std::vector<NodeId> inputs;
        OpAttrs attrs;
        Tensor value;
    };

    const Node& node(NodeId id) const;
    GradientMap sweep(NodeId seed, std::span<const NodeId> wrt, bool guided) const;

    GradMode mode_;
    std::vector<Node> nodes_;
};

// Evaluates a primitive on plain tensors; shared by Graph and replay.
Tensor eval_primitive(Op op, std::span<const Tensor* const> inputs, const OpAttrs& attrs);

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    bool passed = false;
    bool non_finite = false;
    std::string message;
};

// Builds a scalar-valued graph from `point`, which the builder receives as a
// leaf node.
using GraphBuilder = std::function<NodeId(Graph&, NodeId)>;

// Compares Graph::backward against central differences coordinate by
// coordinate. Relative error is |a - n| / max(|a|, |n|, 1e-4).
GradCheckReport grad_check(const GraphBuilder& f, const Tensor& point, double step = 1e-5,
                           double tol = 1e-4);

}  // namespace lagsight
