#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>

#include "lfi/matrix.hpp"

namespace lfi::linalg {

/// Lower Cholesky factor of a symmetric matrix; nullopt if it is not
/// positive-definite (some pivot is <= 0 or non-finite).
inline std::optional<Matrix> cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("cholesky: matrix not square");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

/// Solves L y = b for lower-triangular L.
inline Vector solve_lower(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  return y;
}

/// Solves Lᵀ x = b for lower-triangular L.
inline Vector solve_lower_transpose(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

/// Solves (L Lᵀ) x = b.
inline Vector cholesky_solve(const Matrix& l, std::span<const double> b) {
  return solve_lower_transpose(l, solve_lower(l, b));
}

inline double log_det_from_cholesky(const Matrix& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

/// Inverse of L Lᵀ.
inline Matrix cholesky_inverse(const Matrix& l) {
  const std::size_t n = l.rows();
  Matrix inv(n, n);
  Vector e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e.assign(n, 0.0);
    e[j] = 1.0;
    Vector col = cholesky_solve(l, e);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double avg = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = avg;
      inv(j, i) = avg;
    }
  return inv;
}

/// log N(x; mean, L Lᵀ).
inline double gaussian_log_density_chol(std::span<const double> x, std::span<const double> mean,
                                        const Matrix& l) {
  const std::size_t d = x.size();
  Vector r(d);
  for (std::size_t i = 0; i < d; ++i) r[i] = x[i] - mean[i];
  const Vector z = solve_lower(l, r);
  double q = 0.0;
  for (double v : z) q += v * v;
  return -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) +
                 log_det_from_cholesky(l) + q);
}

inline Matrix add(const Matrix& a, const Matrix& b, double scale_b = 1.0) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shape mismatch");
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += scale_b * bd[i];
  return c;
}

inline double trace(const Matrix& a) {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) t += a(i, i);
  return t;
}

}  // namespace lfi::linalg
