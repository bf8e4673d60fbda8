#include "rgc/diffcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "rgc/common/error.hpp"

namespace rgc::diffcore {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  require(data_.size() == shape_numel(shape_), ErrorKind::kDimension,
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_string(shape_));
}

Tensor Tensor::uninitialized(Shape shape) {
  Storage data;
  data.resize(shape_numel(shape));
  return Tensor(FromStorage{}, std::move(shape), std::move(data));
}

double Tensor::item() const {
  require(data_.size() == 1, ErrorKind::kDimension, "item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_numel(shape) == data_.size(), ErrorKind::kDimension,
          "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(FromStorage{}, std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::accumulate(const Tensor& other) {
  require(other.shape_ == shape_, ErrorKind::kDimension,
          "accumulate " + shape_string(other.shape_) + " into " + shape_string(shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

}  // namespace rgc::diffcore
