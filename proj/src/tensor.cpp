#include "advlab/tensor.hpp"

#include <cmath>

namespace advlab {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
    for (std::size_t d : shape_) {
        if (d == 0) throw std::invalid_argument("Tensor: zero dimension in shape " + shape_str(shape_));
    }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " does not match data length " +
                                    std::to_string(data_.size()));
    }
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = value;
    return t;
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != data_.size()) {
        throw std::invalid_argument("reshape: element count mismatch, " + shape_str(shape_) + " -> " +
                                    shape_str(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

Tensor Tensor::row(std::size_t i) const {
    if (rank() < 2) throw std::invalid_argument("row: tensor rank < 2");
    std::size_t stride = numel() / shape_[0];
    if (i >= shape_[0]) throw std::out_of_range("row: index out of range");
    std::vector<double> out(data_.begin() + i * stride, data_.begin() + (i + 1) * stride);
    Shape s(shape_.begin() + 1, shape_.end());
    return Tensor(std::move(s), std::move(out));
}

double norm_l1(const double* v, std::size_t n) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(v[i]);
    return s;
}

double norm_l2(const double* v, std::size_t n) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

double norm_linf(const double* v, std::size_t n) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s = std::max(s, std::abs(v[i]));
    return s;
}

double norm_l1(const Tensor& t) { return norm_l1(t.data(), t.numel()); }
double norm_l2(const Tensor& t) { return norm_l2(t.data(), t.numel()); }
double norm_linf(const Tensor& t) { return norm_linf(t.data(), t.numel()); }

}  // namespace advlab
