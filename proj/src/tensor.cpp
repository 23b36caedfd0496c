#include "trackcast/tensor.hpp"

#include <cmath>

#include "trackcast/errors.hpp"

namespace trackcast {

namespace {
std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, double fill)
    : shape(std::move(shape_)), data(shape_numel(shape), fill) {
    for (std::size_t d : shape)
        if (d == 0) throw ShapeError("tensor: zero-sized dimension");
}

Tensor Tensor::scalar(double v) {
    Tensor t({1, 1});
    t.data[0] = v;
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    Tensor t;
    t.shape = {1, values.size()};
    t.data = std::move(values);
    if (t.data.empty()) throw ShapeError("tensor row: empty");
    return t;
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> values) {
    if (values.size() != r * c)
        throw ShapeError("tensor matrix: " + std::to_string(values.size()) + " values for " +
                         std::to_string(r) + "x" + std::to_string(c));
    Tensor t;
    t.shape = {r, c};
    t.data = std::move(values);
    return t;
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape, 0.0); }

std::size_t Tensor::rows() const {
    if (shape.size() != 2) throw ShapeError("rows(): tensor is not rank 2, shape " + shape_str());
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() != 2) throw ShapeError("cols(): tensor is not rank 2, shape " + shape_str());
    return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

double Tensor::item() const {
    if (data.size() != 1) throw ShapeError("item(): tensor is not scalar, shape " + shape_str());
    return data[0];
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void check_finite(const Tensor& t, const std::string& what) {
    if (!t.all_finite()) throw DomainError(what + ": non-finite value");
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace trackcast
