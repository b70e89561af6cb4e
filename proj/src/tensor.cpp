#include "lagsight/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#include "lagsight/error.hpp"

namespace lagsight {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_product(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto e : shape_) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
    }
    data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto e : shape_) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
    }
    if (shape_product(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> data;
    std::size_t ncols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
        if (r.size() != ncols) throw ShapeError("Tensor::matrix: ragged initializer");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), ncols}, std::move(data));
}

Tensor Tensor::row(std::initializer_list<double> values) {
    return Tensor({1, values.size()}, std::vector<double>(values));
}

Tensor Tensor::row(std::span<const double> values) {
    return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, std::vector<double>{value}); }

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
}

bool Tensor::is_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMajor>;
using View = Eigen::Map<RowMajor>;

auto idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n) {
    View(c, idx(m), idx(n)).noalias() +=
        ConstView(a, idx(m), idx(k)) * ConstView(b, idx(k), idx(n));
}

void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    View(c, idx(m), idx(n)).noalias() +=
        ConstView(a, idx(m), idx(k)) * ConstView(b, idx(n), idx(k)).transpose();
}

void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    View(c, idx(m), idx(n)).noalias() +=
        ConstView(a, idx(k), idx(m)).transpose() * ConstView(b, idx(k), idx(n));
}

}  // namespace lagsight
