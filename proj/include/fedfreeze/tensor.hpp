#pragma once

#include <Eigen/Dense>

#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fedfreeze {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-channel image, row-major (height x width).
using Image = RowMatrix<double>;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

inline Index element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>{});
}

/// Dense n-dimensional array stored flat in row-major order.
template <typename Scalar>
class TensorBuffer {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  TensorBuffer() = default;

  explicit TensorBuffer(Shape shape) : shape_(std::move(shape)) {
    check_shape();
    data_ = Vector::Zero(element_count(shape_));
  }

  TensorBuffer(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("tensor shape " + to_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " elements");
    }
  }

  static TensorBuffer constant(Shape shape, Scalar value) {
    TensorBuffer t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const { return data_.size(); }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }
  Scalar* raw() { return data_.data(); }
  const Scalar* raw() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  bool all_finite() const { return data_.allFinite(); }

  /// Row-major matrix view with the given extents; rows * cols must equal size().
  Eigen::Map<RowMatrix<Scalar>> as_matrix(Index rows, Index cols, Index offset = 0) {
    return {data_.data() + offset, rows, cols};
  }
  Eigen::Map<const RowMatrix<Scalar>> as_matrix(Index rows, Index cols, Index offset = 0) const {
    return {data_.data() + offset, rows, cols};
  }

  friend bool same_shape(const TensorBuffer& a, const TensorBuffer& b) { return a.shape_ == b.shape_; }

  /// Bitwise equality of shape and payload.
  friend bool bit_identical(const TensorBuffer& a, const TensorBuffer& b) {
    return a.shape_ == b.shape_ &&
           std::memcmp(a.raw(), b.raw(), static_cast<std::size_t>(a.size()) * sizeof(Scalar)) == 0;
  }

 private:
  void check_shape() const {
    for (Index d : shape_) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
    }
  }

  Shape shape_;
  Vector data_;
};

using Tensor = TensorBuffer<double>;

}  // namespace fedfreeze
