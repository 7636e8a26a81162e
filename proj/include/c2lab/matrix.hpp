#pragma once

#include <cmath>
#include <cstddef>
#include <iterator>
#include <span>
#include <stdexcept>
#include <vector>

namespace c2lab {

/// Dense row-major matrix. Storage is a single contiguous vector so rows can
/// be handed out as spans and the whole buffer written to disk in one pass.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw std::invalid_argument("matrix buffer size does not match shape");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

// Reductions accumulate in double in index order so results do not depend on
// the element type or on how callers partition work.
template <typename RangeA, typename RangeB>
double dot(const RangeA& a, const RangeB& b) {
  if (std::size(a) != std::size(b)) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < std::size(a); ++i) {
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return s;
}

template <typename Range>
double squared_norm(const Range& a) {
  return dot(a, a);
}

template <typename Range>
double norm(const Range& a) {
  return std::sqrt(squared_norm(a));
}

template <typename RangeA, typename RangeB>
double cosine(const RangeA& a, const RangeB& b) {
  return dot(a, b) / (norm(a) * norm(b));
}

}  // namespace c2lab
