#include "lagsight/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lagsight/error.hpp"

namespace lagsight {

namespace {

void require_rank2(Op op, const Tensor& t) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op_name(op)) + ": expected a rank-2 operand, got " +
                         shape_str(t.shape()));
    }
}

[[noreturn]] void mismatch(Op op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

void require_axis(Op op, int axis) {
    if (axis != 0 && axis != 1) {
        throw ShapeError(std::string(op_name(op)) + ": axis must be 0 or 1, got " +
                         std::to_string(axis));
    }
}

enum class Bcast { Same, Row, Col, Scalar };

Bcast broadcast_kind(Op op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Bcast::Same;
    if (b.rows() == 1 && b.cols() == 1) return Bcast::Scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::Row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::Col;
    mismatch(op, a, b);
}

inline double bval(const Tensor& b, Bcast kind, std::size_t r, std::size_t c) {
    switch (kind) {
        case Bcast::Same: return b.at(r, c);
        case Bcast::Row: return b[c];
        case Bcast::Col: return b[r];
        case Bcast::Scalar: return b[0];
    }
    return 0.0;
}

// Reduces a full-shape gradient onto the broadcast operand's shape.
void reduce_into(const Tensor& g, Bcast kind, Tensor& out) {
    const std::size_t R = g.rows(), C = g.cols();
    switch (kind) {
        case Bcast::Same:
            for (std::size_t i = 0; i < g.size(); ++i) out[i] += g[i];
            break;
        case Bcast::Row:
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) out[c] += g.at(r, c);
            break;
        case Bcast::Col:
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) out[r] += g.at(r, c);
            break;
        case Bcast::Scalar:
            for (std::size_t i = 0; i < g.size(); ++i) out[0] += g[i];
            break;
    }
}

inline double sigmoid_fn(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

const char* op_name(Op op) noexcept {
    switch (op) {
        case Op::Input: return "input";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Mul: return "mul";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Sigmoid: return "sigmoid";
        case Op::Tanh: return "tanh";
        case Op::Relu: return "relu";
        case Op::Softmax: return "softmax";
        case Op::Sum: return "sum";
        case Op::Scale: return "scale";
    }
    return "?";
}

Tensor eval_primitive(Op op, std::span<const Tensor* const> in, const OpAttrs& attrs) {
    auto arity = [&](std::size_t n) {
        if (in.size() != n) {
            throw ShapeError(std::string(op_name(op)) + ": expected " + std::to_string(n) +
                             " inputs, got " + std::to_string(in.size()));
        }
    };
    switch (op) {
        case Op::Input:
            throw ShapeError("input nodes are created with Graph::input");
        case Op::MatMul: {
            arity(2);
            const Tensor& a = *in[0];
            const Tensor& b = *in[1];
            require_rank2(op, a);
            require_rank2(op, b);
            if (a.cols() != b.rows()) mismatch(op, a, b);
            Tensor out({a.rows(), b.cols()});
            matmul_acc(a.ptr(), b.ptr(), out.ptr(), a.rows(), a.cols(), b.cols());
            return out;
        }
        case Op::Add:
        case Op::Mul: {
            arity(2);
            const Tensor& a = *in[0];
            const Tensor& b = *in[1];
            require_rank2(op, a);
            require_rank2(op, b);
            const Bcast kind = broadcast_kind(op, a, b);
            Tensor out(a.shape());
            const std::size_t R = a.rows(), C = a.cols();
            if (kind == Bcast::Same) {
                for (std::size_t i = 0; i < a.size(); ++i)
                    out[i] = op == Op::Add ? a[i] + b[i] : a[i] * b[i];
            } else {
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double bv = bval(b, kind, r, c);
                        out.at(r, c) = op == Op::Add ? a.at(r, c) + bv : a.at(r, c) * bv;
                    }
            }
            return out;
        }
        case Op::Concat: {
            if (in.empty()) throw ShapeError("concat: no inputs");
            require_axis(op, attrs.axis);
            for (const auto* t : in) require_rank2(op, *t);
            const Tensor& first = *in[0];
            std::size_t total = 0;
            for (const auto* t : in) {
                if (attrs.axis == 0 ? t->cols() != first.cols() : t->rows() != first.rows())
                    mismatch(op, first, *t);
                total += attrs.axis == 0 ? t->rows() : t->cols();
            }
            if (attrs.axis == 0) {
                Tensor out({total, first.cols()});
                std::size_t off = 0;
                for (const auto* t : in) {
                    std::copy(t->ptr(), t->ptr() + t->size(), out.ptr() + off);
                    off += t->size();
                }
                return out;
            }
            Tensor out({first.rows(), total});
            for (std::size_t r = 0; r < first.rows(); ++r) {
                double* dst = out.ptr() + r * total;
                for (const auto* t : in) {
                    const double* src = t->ptr() + r * t->cols();
                    dst = std::copy(src, src + t->cols(), dst);
                }
            }
            return out;
        }
        case Op::Slice: {
            arity(1);
            const Tensor& a = *in[0];
            require_rank2(op, a);
            require_axis(op, attrs.axis);
            const std::size_t extent = attrs.axis == 0 ? a.rows() : a.cols();
            if (attrs.begin >= attrs.end || attrs.end > extent) {
                throw ShapeError("slice: range [" + std::to_string(attrs.begin) + "," +
                                 std::to_string(attrs.end) + ") invalid for " +
                                 shape_str(a.shape()) + " along axis " +
                                 std::to_string(attrs.axis));
            }
            const std::size_t len = attrs.end - attrs.begin;
            if (attrs.axis == 0) {
                Tensor out({len, a.cols()});
                const double* src = a.ptr() + attrs.begin * a.cols();
                std::copy(src, src + out.size(), out.ptr());
                return out;
            }
            Tensor out({a.rows(), len});
            for (std::size_t r = 0; r < a.rows(); ++r) {
                const double* src = a.ptr() + r * a.cols() + attrs.begin;
                std::copy(src, src + len, out.ptr() + r * len);
            }
            return out;
        }
        case Op::Sigmoid:
        case Op::Tanh:
        case Op::Relu: {
            arity(1);
            const Tensor& a = *in[0];
            require_rank2(op, a);
            Tensor out(a.shape());
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double x = a[i];
                out[i] = op == Op::Sigmoid ? sigmoid_fn(x)
                         : op == Op::Tanh  ? std::tanh(x)
                                           : (x > 0.0 ? x : 0.0);
            }
            return out;
        }
        case Op::Softmax: {
            arity(1);
            const Tensor& a = *in[0];
            require_rank2(op, a);
            require_axis(op, attrs.axis);
            Tensor out(a.shape());
            const std::size_t R = a.rows(), C = a.cols();
            const std::size_t outer = attrs.axis == 1 ? R : C;
            const std::size_t inner = attrs.axis == 1 ? C : R;
            for (std::size_t o = 0; o < outer; ++o) {
                auto idx = [&](std::size_t i) {
                    return attrs.axis == 1 ? o * C + i : i * C + o;
                };
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < inner; ++i) mx = std::max(mx, a[idx(i)]);
                double total = 0.0;
                for (std::size_t i = 0; i < inner; ++i) {
                    const double e = std::exp(a[idx(i)] - mx);
                    out[idx(i)] = e;
                    total += e;
                }
                for (std::size_t i = 0; i < inner; ++i) out[idx(i)] /= total;
            }
            return out;
        }
        case Op::Sum: {
            arity(1);
            const Tensor& a = *in[0];
            require_rank2(op, a);
            require_axis(op, attrs.axis);
            const std::size_t R = a.rows(), C = a.cols();
            if (attrs.axis == 0) {
                Tensor out({1, C});
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < C; ++c) out[c] += a.at(r, c);
                return out;
            }
            Tensor out({R, 1});
            for (std::size_t r = 0; r < R; ++r) {
                double s = 0.0;
                for (std::size_t c = 0; c < C; ++c) s += a.at(r, c);
                out[r] = s;
            }
            return out;
        }
        case Op::Scale: {
            arity(1);
            const Tensor& a = *in[0];
            require_rank2(op, a);
            Tensor out(a.shape());
            for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * attrs.factor;
            return out;
        }
    }
    throw ShapeError("unknown primitive");
}

void GradientMap::emplace(NodeId id, Tensor grad) { entries_.emplace_back(id, std::move(grad)); }

const Tensor& GradientMap::operator[](NodeId id) const {
    for (const auto& [key, grad] : entries_) {
        if (key == id) return grad;
    }
    throw std::out_of_range("GradientMap: node " + std::to_string(id.index) + " not requested");
}

NodeId Graph::input(Tensor value) {
    require_rank2(Op::Input, value);
    Node n;
    n.op = Op::Input;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::apply(Op op, std::span<const NodeId> inputs, const OpAttrs& attrs) {
    std::vector<const Tensor*> vals;
    vals.reserve(inputs.size());
    for (auto id : inputs) vals.push_back(&node(id).value);
    Node n;
    n.op = op;
    n.inputs.assign(inputs.begin(), inputs.end());
    n.attrs = attrs;
    n.value = eval_primitive(op, vals, attrs);
    nodes_.push_back(std::move(n));
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    const NodeId in[] = {a, b};
    return apply(Op::MatMul, in);
}
NodeId Graph::add(NodeId a, NodeId b) {
    const NodeId in[] = {a, b};
    return apply(Op::Add, in);
}
NodeId Graph::mul(NodeId a, NodeId b) {
    const NodeId in[] = {a, b};
    return apply(Op::Mul, in);
}
NodeId Graph::concat(std::span<const NodeId> parts, int axis) {
    return apply(Op::Concat, parts, OpAttrs{.axis = axis});
}
NodeId Graph::slice(NodeId a, int axis, std::size_t begin, std::size_t end) {
    const NodeId in[] = {a};
    return apply(Op::Slice, in, OpAttrs{.axis = axis, .begin = begin, .end = end});
}
NodeId Graph::sigmoid(NodeId a) {
    const NodeId in[] = {a};
    return apply(Op::Sigmoid, in);
}
NodeId Graph::tanh(NodeId a) {
    const NodeId in[] = {a};
    return apply(Op::Tanh, in);
}
NodeId Graph::relu(NodeId a) {
    const NodeId in[] = {a};
    return apply(Op::Relu, in);
}
NodeId Graph::softmax(NodeId a, int axis) {
    const NodeId in[] = {a};
    return apply(Op::Softmax, in, OpAttrs{.axis = axis});
}
NodeId Graph::sum(NodeId a, int axis) {
    const NodeId in[] = {a};
    return apply(Op::Sum, in, OpAttrs{.axis = axis});
}
NodeId Graph::scale(NodeId a, double factor) {
    const NodeId in[] = {a};
    return apply(Op::Scale, in, OpAttrs{.factor = factor});
}

const Graph::Node& Graph::node(NodeId id) const {
    if (id.index >= nodes_.size()) {
        throw std::out_of_range("graph node " + std::to_string(id.index) + " does not exist");
    }
    return nodes_[id.index];
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }
Op Graph::op(NodeId id) const { return node(id).op; }
std::span<const NodeId> Graph::inputs(NodeId id) const { return node(id).inputs; }

GradientMap Graph::backward(NodeId seed, std::span<const NodeId> wrt) const {
    if (mode_ != GradMode::Standard) {
        throw std::logic_error("backward requires a graph built in Standard mode");
    }
    return sweep(seed, wrt, false);
}

GradientMap Graph::guided_backward(NodeId seed, std::span<const NodeId> wrt) const {
    if (mode_ != GradMode::Guided) {
        throw std::logic_error("guided_backward requires a graph built in Guided mode");
    }
    return sweep(seed, wrt, true);
}

GradientMap Graph::sweep(NodeId seed, std::span<const NodeId> wrt, bool guided) const {
    const Node& seed_node = node(seed);
    if (seed_node.value.size() != 1) {
        throw ShapeError("backward: seed must be scalar, got " +
                         shape_str(seed_node.value.shape()));
    }
    for (auto w : wrt) node(w);

    // needs[i]: node i lies upstream of some wrt node, so its gradient matters.
    const std::size_t last = seed.index;
    std::vector<char> needs(last + 1, 0);
    std::uint32_t lowest = seed.index;
    for (auto w : wrt) {
        if (w.index <= last) {
            needs[w.index] = 1;
            lowest = std::min(lowest, w.index);
        }
    }
    for (std::size_t i = lowest; i <= last; ++i) {
        if (needs[i]) continue;
        for (auto in : nodes_[i].inputs) {
            if (needs[in.index]) {
                needs[i] = 1;
                break;
            }
        }
    }

    std::vector<Tensor> grads(last + 1);
    if (needs[last]) grads[last] = Tensor(seed_node.value.shape(), 1.0);

    auto accum = [&](NodeId target) -> Tensor* {
        if (!needs[target.index]) return nullptr;
        Tensor& g = grads[target.index];
        if (g.empty()) g = Tensor(nodes_[target.index].value.shape(), 0.0);
        return &g;
    };

    for (std::size_t idx = last + 1; idx-- > lowest;) {
        const Node& n = nodes_[idx];
        if (n.op == Op::Input || grads[idx].empty()) continue;
        const Tensor& g = grads[idx];
        const Tensor& y = n.value;
        switch (n.op) {
            case Op::Input: break;
            case Op::MatMul: {
                const Tensor& a = nodes_[n.inputs[0].index].value;
                const Tensor& b = nodes_[n.inputs[1].index].value;
                if (Tensor* da = accum(n.inputs[0]))
                    matmul_nt_acc(g.ptr(), b.ptr(), da->ptr(), a.rows(), b.cols(), a.cols());
                if (Tensor* db = accum(n.inputs[1]))
                    matmul_tn_acc(a.ptr(), g.ptr(), db->ptr(), b.rows(), a.rows(), b.cols());
                break;
            }
            case Op::Add: {
                const Tensor& a = nodes_[n.inputs[0].index].value;
                const Tensor& b = nodes_[n.inputs[1].index].value;
                const Bcast kind = broadcast_kind(Op::Add, a, b);
                if (Tensor* da = accum(n.inputs[0]))
                    for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
                if (Tensor* db = accum(n.inputs[1])) reduce_into(g, kind, *db);
                break;
            }
            case Op::Mul: {
                const Tensor& a = nodes_[n.inputs[0].index].value;
                const Tensor& b = nodes_[n.inputs[1].index].value;
                const Bcast kind = broadcast_kind(Op::Mul, a, b);
                const std::size_t R = a.rows(), C = a.cols();
                if (Tensor* da = accum(n.inputs[0])) {
                    for (std::size_t r = 0; r < R; ++r)
                        for (std::size_t c = 0; c < C; ++c)
                            da->at(r, c) += g.at(r, c) * bval(b, kind, r, c);
                }
                if (Tensor* db = accum(n.inputs[1])) {
                    Tensor ga(a.shape());
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * a[i];
                    reduce_into(ga, kind, *db);
                }
                break;
            }
            case Op::Concat: {
                std::size_t off = 0;
                for (auto in : n.inputs) {
                    const Tensor& part = nodes_[in.index].value;
                    Tensor* dp = accum(in);
                    if (n.attrs.axis == 0) {
                        if (dp)
                            for (std::size_t i = 0; i < part.size(); ++i)
                                (*dp)[i] += g[off * g.cols() + i];
                        off += part.rows();
                    } else {
                        if (dp)
                            for (std::size_t r = 0; r < part.rows(); ++r)
                                for (std::size_t c = 0; c < part.cols(); ++c)
                                    dp->at(r, c) += g.at(r, off + c);
                        off += part.cols();
                    }
                }
                break;
            }
            case Op::Slice: {
                Tensor* da = accum(n.inputs[0]);
                if (!da) break;
                if (n.attrs.axis == 0) {
                    double* dst = da->ptr() + n.attrs.begin * da->cols();
                    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                } else {
                    for (std::size_t r = 0; r < g.rows(); ++r)
                        for (std::size_t c = 0; c < g.cols(); ++c)
                            da->at(r, n.attrs.begin + c) += g.at(r, c);
                }
                break;
            }
            case Op::Sigmoid:
            case Op::Tanh:
            case Op::Relu: {
                Tensor* da = accum(n.inputs[0]);
                if (!da) break;
                const Tensor& x = nodes_[n.inputs[0].index].value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double d = n.op == Op::Sigmoid ? y[i] * (1.0 - y[i])
                                     : n.op == Op::Tanh  ? 1.0 - y[i] * y[i]
                                                         : (x[i] > 0.0 ? 1.0 : 0.0);
                    double local = g[i] * d;
                    if (guided && local < 0.0) local = 0.0;
                    (*da)[i] += local;
                }
                break;
            }
            case Op::Softmax: {
                Tensor* da = accum(n.inputs[0]);
                if (!da) break;
                const std::size_t R = y.rows(), C = y.cols();
                const std::size_t outer = n.attrs.axis == 1 ? R : C;
                const std::size_t inner = n.attrs.axis == 1 ? C : R;
                for (std::size_t o = 0; o < outer; ++o) {
                    auto at = [&](std::size_t i) {
                        return n.attrs.axis == 1 ? o * C + i : i * C + o;
                    };
                    double dot = 0.0;
                    for (std::size_t i = 0; i < inner; ++i) dot += g[at(i)] * y[at(i)];
                    for (std::size_t i = 0; i < inner; ++i)
                        (*da)[at(i)] += y[at(i)] * (g[at(i)] - dot);
                }
                break;
            }
            case Op::Sum: {
                Tensor* da = accum(n.inputs[0]);
                if (!da) break;
                const std::size_t R = da->rows(), C = da->cols();
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < C; ++c)
                        da->at(r, c) += n.attrs.axis == 0 ? g[c] : g[r];
                break;
            }
            case Op::Scale: {
                Tensor* da = accum(n.inputs[0]);
                if (!da) break;
                for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * n.attrs.factor;
                break;
            }
        }
    }

    GradientMap out;
    for (auto w : wrt) {
        if (w.index <= last && !grads[w.index].empty()) {
            out.emplace(w, grads[w.index]);
        } else {
            out.emplace(w, Tensor(nodes_[w.index].value.shape(), 0.0));
        }
    }
    return out;
}

Graph Graph::replay() const {
    Graph g(mode_);
    g.nodes_.reserve(nodes_.size());
    for (const auto& n : nodes_) {
        if (n.op == Op::Input) {
            g.input(n.value);
        } else {
            g.apply(n.op, n.inputs, n.attrs);
        }
    }
    return g;
}

GradCheckReport grad_check(const GraphBuilder& f, const Tensor& point, double step, double tol) {
    if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
    GradCheckReport report;

    Graph g;
    const NodeId x = g.input(point);
    const NodeId seed = f(g, x);
    const NodeId wrt[] = {x};
    const Tensor analytic = g.backward(seed, wrt)[x];

    auto eval_at = [&](const Tensor& p) {
        Graph h;
        const NodeId px = h.input(p);
        return h.value(f(h, px)).item();
    };

    Tensor probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double fp = eval_at(probe);
        probe[i] = orig - step;
        const double fm = eval_at(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            report.non_finite = true;
            report.worst_index = i;
            report.message = "non-finite forward value when perturbing coordinate " +
                             std::to_string(i);
            report.passed = false;
            return report;
        }
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic[i];
        const double abs_err = std::abs(a - numeric);
        const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-4});
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report.passed = report.max_rel_error < tol;
    report.message = "max relative error " + std::to_string(report.max_rel_error) + " at " +
                     std::to_string(report.worst_index);
    return report;
}

}  // namespace lagsight
