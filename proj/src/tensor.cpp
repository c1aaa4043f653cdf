#include "rfcn/tensor.hpp"

#include <cmath>
#include <sstream>

namespace rfcn {

std::string shape_to_string(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << ")";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) {
        if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_to_string(s));
        n *= e;
    }
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw DimensionError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_to_string(shape_));
    }
}

Tensor::Tensor(Shape shape, std::initializer_list<double> data)
    : Tensor(std::move(shape), std::vector<double>(data)) {}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

double& Tensor::at(int i, int j) {
    return data_[static_cast<size_t>(i) * shape_[1] + j];
}
double Tensor::at(int i, int j) const {
    return data_[static_cast<size_t>(i) * shape_[1] + j];
}
double& Tensor::at(int c, int y, int x) {
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
}
double Tensor::at(int c, int y, int x) const {
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
}
double& Tensor::at4(int f, int c, int y, int x) {
    return data_[((static_cast<size_t>(f) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}
double Tensor::at4(int f, int c, int y, int x) const {
    return data_[((static_cast<size_t>(f) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != size()) {
        throw DimensionError("reshape from " + shape_str() + " to " +
                             shape_to_string(new_shape) + " changes element count");
    }
    return Tensor(std::move(new_shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_str() +
                             " vs " + b.shape_str());
    }
}

}  // namespace rfcn
