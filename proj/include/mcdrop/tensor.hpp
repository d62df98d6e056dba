#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcdrop {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Index element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major float64 array. The flat storage is an Eigen vector so
/// every op can reinterpret it as a matrix without copying.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Eigen::VectorXd data);
  Tensor(Shape shape, std::initializer_list<double> values);

  static Tensor scalar(double value) { return Tensor({}, Eigen::VectorXd::Constant(1, value)); }
  static Tensor constant(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index size() const { return data_.size(); }

  Eigen::VectorXd& data() { return data_; }
  const Eigen::VectorXd& data() const { return data_; }
  double& operator[](Index i) { return data_[i]; }
  double operator[](Index i) const { return data_[i]; }
  double item() const;

  /// View as [shape[0], prod(shape[1:])].
  Eigen::Map<RowMatrixXd> matrix();
  Eigen::Map<const RowMatrixXd> matrix() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const { return data_.allFinite(); }

  bool requires_grad = false;
  std::optional<Eigen::VectorXd> grad;

 private:
  Shape shape_;
  Eigen::VectorXd data_;
};

/// Bit-level equality of shape and payload.
bool identical(const Tensor& a, const Tensor& b);

}  // namespace mcdrop
