#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "rfp/errors.hpp"

namespace rfp {

/// Dense n-dimensional array, row-major, templated on scalar. This is the
/// substrate of all model math; rank-4 tensors follow the [batch, channel,
/// height, width] convention. Gradients are held by graph nodes as a second
/// Tensor of identical shape, not inside the tensor itself.
template <typename Scalar>
class Tensor {
 public:
  using MatMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using VecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
  using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<std::size_t>(size()), Scalar(0));
  }

  Tensor(std::vector<int> shape, std::vector<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<std::int64_t>(data_.size()) != size())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape product " + std::to_string(size()));
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, Scalar v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(Scalar v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }

  std::int64_t size() const {
    std::int64_t n = 1;
    for (int e : shape_) n *= e;
    return shape_.empty() ? 0 : n;
  }

  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const Scalar& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// Flat offset of [b,c,h,w] in a rank-4 tensor.
  std::int64_t at4(int b, int c, int h, int w) const {
    return ((static_cast<std::int64_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }
  /// Flat offset of [i,j] in a rank-2 tensor.
  std::int64_t at2(int i, int j) const {
    return static_cast<std::int64_t>(i) * shape_[1] + j;
  }

  /// Contiguous reinterpretation as a rows x cols row-major matrix.
  MatMap as_matrix(std::int64_t rows, std::int64_t cols) {
    return MatMap(data_.data(), rows, cols);
  }
  ConstMatMap as_matrix(std::int64_t rows, std::int64_t cols) const {
    return ConstMatMap(data_.data(), rows, cols);
  }
  VecMap as_vector() { return VecMap(data_.data(), size()); }
  ConstVecMap as_vector() const { return ConstVecMap(data_.data(), size()); }

  /// Same data, new shape (must preserve the element count).
  Tensor reshaped(std::vector<int> new_shape) const {
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.validate_shape();
    if (t.size() != size()) throw ShapeError("reshape changes element count");
    t.data_ = data_;
    return t;
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  void validate_shape() const {
    if (shape_.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (int e : shape_)
      if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str_raw());
  }
  std::string shape_str_raw() const {
    std::string s;
    for (int e : shape_) s += std::to_string(e) + " ";
    return s;
  }

  std::vector<int> shape_;
  std::vector<Scalar> data_;
};

using Tensord = Tensor<double>;

}  // namespace rfp
