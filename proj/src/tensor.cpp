#include "asl/tensor.hpp"

#include <algorithm>

namespace asl {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > kMaxRank)
    throw ShapeError("tensor rank must be 1.." + std::to_string(kMaxRank) + ", got shape " +
                     shape_string(shape));
  if (std::any_of(shape.begin(), shape.end(), [](std::size_t d) { return d == 0; }))
    throw ShapeError("tensor dims must be >= 1, got shape " + shape_string(shape));
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  validate_shape(shape_);
  if (data_.size() != shape_size(shape_))
    throw ShapeError("tensor of shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(shape_));
  return shape_[axis];
}

template <typename T>
std::size_t BasicTensor<T>::offset_of(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size())
    throw ShapeError("index rank " + std::to_string(index.size()) + " does not match shape " +
                     shape_string(shape_));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis])
      throw ShapeError("index " + std::to_string(i) + " out of range on axis " +
                       std::to_string(axis) + " of shape " + shape_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

template <typename T>
T& BasicTensor<T>::at(std::initializer_list<std::size_t> index) {
  return data_[offset_of(index)];
}

template <typename T>
const T& BasicTensor<T>::at(std::initializer_list<std::size_t> index) const {
  return data_[offset_of(index)];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const& {
  BasicTensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) && {
  validate_shape(shape);
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  BasicTensor out;
  out.shape_ = std::move(shape);
  out.data_ = std::move(data_);
  shape_.clear();
  return out;
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace asl
