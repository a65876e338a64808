#include "pman/ad/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "pman/error.hpp"

namespace pman::ad {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
    }
}

template <typename T>
T Tensor<T>::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    shape_ = std::move(shape);
}

template <typename T>
void Tensor<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
std::vector<T>& Tensor<T>::grad() {
    if (!grad_) grad_.emplace(data_.size(), T{0});
    return *grad_;
}

template <typename T>
const std::vector<T>& Tensor<T>::grad() const {
    if (!grad_) throw InvariantError("tensor has no gradient");
    return *grad_;
}

template <typename T>
void Tensor<T>::zero_grad() {
    grad().assign(data_.size(), T{0});
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace pman::ad
