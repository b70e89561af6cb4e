#pragma once

#include <cstdint>
#include <ostream>

#include "lagsight/autodiff.hpp"
#include "lagsight/rng.hpp"

namespace lagsight {

// gtest picks this up when printing failed tensor comparisons.
inline void PrintTo(const Tensor& t, std::ostream* os) {
    *os << t.rows() << "x" << t.cols() << " [";
    for (std::size_t i = 0; i < t.size() && i < 24; ++i) *os << (i ? ", " : "") << t[i];
    if (t.size() > 24) *os << ", ...";
    *os << "]";
}

}  // namespace lagsight

namespace lagsight::testing {

inline Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t({r, c});
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Entries bounded away from zero, for probing relu without landing on its kink.
inline Tensor off_zero_tensor(Rng& rng, std::size_t r, std::size_t c) {
    Tensor t({r, c});
    for (auto& v : t.data()) v = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
    return t;
}

// Reduces any node to a scalar through fixed random weights, so every entry
// of the node gets a distinct gradient.
inline NodeId weighted_sum(Graph& g, NodeId node, std::uint64_t seed = 99) {
    Rng rng(seed);
    const Tensor& v = g.value(node);
    const NodeId w = g.input(random_tensor(rng, v.rows(), v.cols()));
    return g.sum(g.sum(g.mul(node, w), 0), 1);
}

}  // namespace lagsight::testing
