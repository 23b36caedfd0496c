#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace trackcast {

// Dense 64-bit float tensor, row-major. Vectors are carried as 1 x n
// matrices so matmul composes without special cases; scalars are 1 x 1.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);

    static Tensor scalar(double v);
    static Tensor row(std::vector<double> values);                // 1 x n
    static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> values);
    static Tensor zeros_like(const Tensor& t);

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    bool is_scalar() const { return data.size() == 1; }

    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;
    double item() const;  // scalar value; throws unless numel()==1

    bool all_finite() const;
    std::string shape_str() const;  // "[2x3]"
};

// Throws DomainError when t holds NaN or Inf; `what` names the offender.
void check_finite(const Tensor& t, const std::string& what);

bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace trackcast
