#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "lfi/errors.hpp"

namespace lfi {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Rows usually hold one sample each.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ShapeError("matrix data length != rows*cols");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), Vector(v.begin(), v.end()));
  }
  static Matrix column_vector(std::span<const double> v) {
    return Matrix(v.size(), 1, Vector(v.begin(), v.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  Vector row_copy(std::size_t r) const { return Vector(row(r).begin(), row(r).end()); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const Vector& storage() const noexcept { return data_; }

  void append_row(std::span<const double> r) {
    if (rows_ == 0 && cols_ == 0) cols_ = r.size();
    if (r.size() != cols_) throw ShapeError("append_row: width mismatch");
    data_.insert(data_.end(), r.begin(), r.end());
    ++rows_;
  }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ShapeError("matvec: dimension mismatch");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    auto r = a.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

inline Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = m.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  if (a.cols() != b.cols()) throw ShapeError("vstack: width mismatch");
  Vector d(a.storage());
  d.insert(d.end(), b.storage().begin(), b.storage().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(d));
}

/// Per-column mean.
inline Vector column_mean(const Matrix& m) {
  Vector mu(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) mu[j] += m(i, j);
  for (double& v : mu) v /= static_cast<double>(m.rows());
  return mu;
}

/// Covariance with divisor N (maximum likelihood convention).
inline Matrix column_covariance(const Matrix& m, std::span<const double> mu) {
  Matrix s(m.cols(), m.cols());
  for (std::size_t n = 0; n < m.rows(); ++n)
    for (std::size_t i = 0; i < m.cols(); ++i) {
      const double di = m(n, i) - mu[i];
      for (std::size_t j = 0; j <= i; ++j) s(i, j) += di * (m(n, j) - mu[j]);
    }
  const double inv = 1.0 / static_cast<double>(m.rows());
  for (std::size_t i = 0; i < m.cols(); ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      s(i, j) *= inv;
      s(j, i) = s(i, j);
    }
  return s;
}

}  // namespace lfi
