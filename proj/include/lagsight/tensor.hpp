#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lagsight {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. Rank-2 is the working rank for the
// autodiff primitives; scalars are 1x1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor row(std::initializer_list<double> values);
    static Tensor row(std::span<const double> values);
    static Tensor scalar(double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // Only meaningful for rank-2 tensors.
    std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* ptr() noexcept { return data_.data(); }
    const double* ptr() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    double item() const;
    bool is_finite() const noexcept;
    void fill(double value) noexcept;

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const Shape& shape) noexcept;

// Dense kernels shared by the graph and the training loop. All accumulate
// into `c`. Backed by Eigen; results are deterministic for a given shape.
void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n);
// c (m x n) += a (m x k) * b^T, with b stored n x k.
void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);
// c (m x n) += a^T * b, with a stored k x m and b stored k x n.
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);

}  // namespace lagsight
