#pragma once

#include <cmath>
#include <numbers>
#include <span>

#include "lfi/linalg.hpp"
#include "lfi/rng.hpp"

namespace lfi {

/// Multivariate normal with its Cholesky factor cached.
class GaussianDensity {
 public:
  GaussianDensity() = default;
  GaussianDensity(Vector mean, Matrix covariance) : mean_(std::move(mean)), cov_(std::move(covariance)) {
    if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size())
      throw ShapeError("GaussianDensity: covariance shape does not match mean");
    auto l = linalg::cholesky(cov_);
    if (!l) throw NumericError("GaussianDensity: covariance is not positive-definite");
    chol_ = std::move(*l);
  }

  static GaussianDensity isotropic(Vector mean, double variance) {
    const std::size_t d = mean.size();
    Matrix c(d, d);
    for (std::size_t i = 0; i < d; ++i) c(i, i) = variance;
    return GaussianDensity(std::move(mean), std::move(c));
  }

  std::size_t dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  const Matrix& covariance() const noexcept { return cov_; }
  const Matrix& cholesky() const noexcept { return chol_; }

  double log_prob(std::span<const double> x) const {
    if (x.size() != dim()) throw ShapeError("GaussianDensity::log_prob: dimension mismatch");
    return linalg::gaussian_log_density_chol(x, mean_, chol_);
  }

  Vector sample(RngStream& rng) const {
    const std::size_t d = dim();
    Vector z(d);
    for (double& v : z) v = rng.normal();
    Vector x(mean_);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k <= i; ++k) x[i] += chol_(i, k) * z[k];
    return x;
  }

  Matrix sample(std::size_t n, RngStream& rng) const {
    Matrix out(n, dim());
    for (std::size_t i = 0; i < n; ++i) {
      Vector s = sample(rng);
      std::copy(s.begin(), s.end(), out.row(i).begin());
    }
    return out;
  }

  friend bool operator==(const GaussianDensity& a, const GaussianDensity& b) {
    return a.mean_ == b.mean_ && a.cov_ == b.cov_;
  }

 private:
  Vector mean_;
  Matrix cov_;
  Matrix chol_;
};

inline double std_normal_log_pdf(double u) noexcept {
  return -0.5 * u * u - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace lfi
