#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "rfcn/error.hpp"

namespace rfcn {

using Shape = std::vector<int>;

std::string shape_to_string(const Shape& s);
std::int64_t shape_numel(const Shape& s);

/// Dense N-dimensional array of doubles, row-major.
///
/// Layout conventions: images and feature maps are channels x height x width;
/// vectors are rank-1. Values are immutable by convention once an operation
/// has produced them; mutation is reserved for parameter updates.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);                       // zero-filled
    Tensor(Shape shape, std::vector<double> data);
    Tensor(Shape shape, std::initializer_list<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Convenience indexers for the common ranks.
    double& at(int i) { return data_[static_cast<size_t>(i)]; }
    double at(int i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int i, int j);
    double at(int i, int j) const;
    double& at(int c, int y, int x);
    double at(int c, int y, int x) const;
    double& at4(int f, int c, int y, int x);
    double at4(int f, int c, int y, int x) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const { return shape_to_string(shape_); }

    /// Same data, new shape; total size must be preserved (row-major order kept).
    Tensor reshaped(Shape new_shape) const;

    bool all_finite() const;
    void fill(double v);

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace rfcn
