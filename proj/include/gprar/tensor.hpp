#pragma once

#include <Eigen/Dense>

#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gprar {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array with an explicit shape.
///
/// Every tensor can be viewed as a matrix whose columns are the last extent
/// and whose rows are all leading extents flattened; the differentiable ops
/// work exclusively on that view.
template <typename Scalar_>
class BasicTensor {
 public:
  using Scalar = Scalar_;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() : shape_{}, values_(Vector<Scalar>::Zero(1)) {}

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
    check_extents();
    values_ = Vector<Scalar>::Zero(shape_size(shape_));
  }

  BasicTensor(Shape shape, Vector<Scalar> values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_extents();
    if (values_.size() != shape_size(shape_))
      throw std::invalid_argument("tensor: " + std::to_string(values_.size()) + " values for shape " +
                                  shape_string(shape_));
  }

  static BasicTensor scalar(Scalar v) {
    BasicTensor t;
    t.values_(0) = v;
    return t;
  }

  template <typename Derived>
  static BasicTensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    BasicTensor t(Shape{m.rows(), m.cols()});
    t.matrix() = m;
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return values_.size(); }
  Index cols() const { return shape_.empty() ? 1 : shape_.back(); }
  Index rows() const { return size() / cols(); }

  MatrixMap matrix() { return MatrixMap(values_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(values_.data(), rows(), cols()); }

  Vector<Scalar>& values() { return values_; }
  const Vector<Scalar>& values() const { return values_; }

  Scalar item() const {
    if (size() != 1) throw std::invalid_argument("tensor: item() on shape " + shape_string(shape_));
    return values_(0);
  }

  Scalar& operator[](Index flat) { return values_(flat); }
  Scalar operator[](Index flat) const { return values_(flat); }

  Scalar& at(std::initializer_list<Index> idx) { return values_(offset(idx)); }
  Scalar at(std::initializer_list<Index> idx) const { return values_(offset(idx)); }

  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), values_); }

  bool all_finite() const { return values_.allFinite(); }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, values_.template cast<Other>());
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  void check_extents() const {
    for (Index e : shape_)
      if (e <= 0) throw std::invalid_argument("tensor: non-positive extent in " + shape_string(shape_));
  }

  Index offset(std::initializer_list<Index> idx) const {
    if (static_cast<std::size_t>(idx.size()) != shape_.size())
      throw std::out_of_range("tensor: index rank mismatch for shape " + shape_string(shape_));
    Index flat = 0;
    std::size_t d = 0;
    for (Index i : idx) {
      if (i < 0 || i >= shape_[d]) throw std::out_of_range("tensor: index out of range");
      flat = flat * shape_[d] + i;
      ++d;
    }
    return flat;
  }

  Shape shape_;
  Vector<Scalar> values_;
};

using Tensor = BasicTensor<double>;

}  // namespace gprar
