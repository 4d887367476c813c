#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ltcsnn/errors.hpp"

namespace ltcsnn {

/// Dense row-major matrix. Weight matrices are stored input-major
/// (rows = fan-in, cols = fan-out) so a batch of row vectors maps through
/// them with a single `rows x cols` product.
template <std::floating_point T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <std::floating_point U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.storage()[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

/// out += x * W  for a single row vector x. Zero entries of x are skipped,
/// which makes binary spike inputs cheap.
template <std::floating_point T>
void accumulate_vecmat(std::span<const T> x, const Matrix<T>& w, std::span<T> out,
                       std::size_t row_offset = 0) {
  const std::size_t n = w.cols();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const T xk = x[k];
    if (xk == T{0}) continue;
    const T* wr = w.row(row_offset + k).data();
    T* o = out.data();
    for (std::size_t j = 0; j < n; ++j) o[j] += xk * wr[j];
  }
}

/// out[k] += sum_j g[j] * W(row_offset + k, j)  (multiply by the transpose).
template <std::floating_point T>
void accumulate_matvec_t(std::span<const T> g, const Matrix<T>& w, std::span<T> out,
                         std::size_t row_offset = 0) {
  const std::size_t n = w.cols();
  for (std::size_t k = 0; k < out.size(); ++k) {
    const T* wr = w.row(row_offset + k).data();
    T acc{0};
    for (std::size_t j = 0; j < n; ++j) acc += g[j] * wr[j];
    out[k] += acc;
  }
}

/// G(row_offset + k, j) += x[k] * g[j]  (outer-product accumulation).
template <std::floating_point T>
void accumulate_outer(std::span<const T> x, std::span<const T> g, Matrix<T>& grad,
                      std::size_t row_offset = 0) {
  const std::size_t n = grad.cols();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const T xk = x[k];
    if (xk == T{0}) continue;
    T* gr = grad.row(row_offset + k).data();
    for (std::size_t j = 0; j < n; ++j) gr[j] += xk * g[j];
  }
}

template <std::floating_point T>
bool all_finite(std::span<const T> v) {
  for (T x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace detail
}  // namespace ltcsnn
