#include "mcdrop/tensor.hpp"

#include <cstring>
#include <numeric>
#include <sstream>

namespace mcdrop {

Index element_count(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(Eigen::VectorXd::Zero(element_count(shape_))) {}

Tensor::Tensor(Shape shape, Eigen::VectorXd data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw ShapeError("shape " + to_string(shape_) + " does not match " + std::to_string(data_.size()) +
                     " elements");
  }
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
    : Tensor(std::move(shape), Eigen::Map<const Eigen::VectorXd>(values.begin(), static_cast<Index>(values.size()))) {}

Tensor Tensor::constant(Shape shape, double value) {
  const Index n = element_count(shape);
  return Tensor(std::move(shape), Eigen::VectorXd::Constant(n, value));
}

Index Tensor::dim(Index axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for shape " + to_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

Eigen::Map<RowMatrixXd> Tensor::matrix() {
  const Index rows = shape_.empty() ? 1 : shape_[0];
  const Index cols = rows == 0 ? 0 : data_.size() / rows;
  return {data_.data(), rows, cols};
}

Eigen::Map<const RowMatrixXd> Tensor::matrix() const {
  const Index rows = shape_.empty() ? 1 : shape_[0];
  const Index cols = rows == 0 ? 0 : data_.size() / rows;
  return {data_.data(), rows, cols};
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data().data(), b.data().data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

}  // namespace mcdrop
