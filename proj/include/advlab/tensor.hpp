#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace advlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of 64-bit floats.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor full(Shape shape, double value);
    static Tensor zeros(Shape shape);
    static Tensor scalar(double value);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    Tensor reshaped(Shape new_shape) const;

    /// Row `i` of a rank>=2 tensor, flattened; copies.
    Tensor row(std::size_t i) const;

private:
    Shape shape_;
    std::vector<double> data_;
};

double norm_l1(const Tensor& t);
double norm_l2(const Tensor& t);
double norm_linf(const Tensor& t);

double norm_l1(const double* v, std::size_t n);
double norm_l2(const double* v, std::size_t n);
double norm_linf(const double* v, std::size_t n);

}  // namespace advlab
