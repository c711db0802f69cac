#pragma once

// Closed-form and non-parametric density baselines.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "lfi/gaussian.hpp"
#include "lfi/math_util.hpp"

namespace lfi {

using GaussianModel = GaussianDensity;

/// Maximum-likelihood Gaussian: empirical mean and (divisor-N) covariance.
/// A singular covariance gets a small diagonal jitter.
inline GaussianModel gaussian_mle_fit(const Matrix& data) {
  if (data.rows() < 2) throw InsufficientDataError("gaussian_mle_fit needs at least 2 rows");
  if (data.cols() < 1) throw InsufficientDataError("gaussian_mle_fit needs at least 1 column");
  Vector mu = column_mean(data);
  Matrix cov = column_covariance(data, mu);
  if (linalg::cholesky(cov)) return GaussianModel(std::move(mu), std::move(cov));
  const double d = static_cast<double>(cov.rows());
  const double tr = linalg::trace(cov);
  double jitter = 1e-9 * (tr > 0.0 ? tr / d : 1.0);
  for (int attempt = 0; attempt < 12; ++attempt, jitter *= 10.0) {
    Matrix c = cov;
    for (std::size_t i = 0; i < c.rows(); ++i) c(i, i) += jitter;
    if (linalg::cholesky(c)) return GaussianModel(std::move(mu), std::move(c));
  }
  throw NumericError("gaussian_mle_fit: covariance could not be regularized");
}

// ---------------------------------------------------------------------------
// Histogram

class HistogramModel {
 public:
  HistogramModel() = default;
  HistogramModel(std::vector<Vector> edges, Vector densities)
      : edges_(std::move(edges)), densities_(std::move(densities)) {
    std::size_t cells = 1;
    for (const auto& e : edges_) {
      if (e.size() < 2) throw ShapeError("histogram axis needs at least two edges");
      for (std::size_t k = 1; k < e.size(); ++k)
        if (!(e[k] > e[k - 1])) throw ShapeError("histogram edges must be strictly increasing");
      cells *= e.size() - 1;
    }
    if (densities_.size() != cells) throw ShapeError("histogram density count does not match bins");
  }

  std::size_t dim() const noexcept { return edges_.size(); }
  const std::vector<Vector>& edges() const noexcept { return edges_; }
  const Vector& densities() const noexcept { return densities_; }
  std::size_t num_bins() const noexcept { return densities_.size(); }

  /// Bin of `x` along `axis`: a point on an interior edge goes to the bin on its
  /// right, the last edge closes the last bin. nullopt when out of range.
  std::optional<std::size_t> axis_bin(std::size_t axis, double x) const {
    const Vector& e = edges_[axis];
    if (!(x >= e.front()) || !(x <= e.back())) return std::nullopt;
    if (x == e.back()) return e.size() - 2;
    auto it = std::upper_bound(e.begin(), e.end(), x);
    return static_cast<std::size_t>(it - e.begin()) - 1;
  }

  std::optional<std::size_t> flat_bin(std::span<const double> x) const {
    std::size_t idx = 0;
    for (std::size_t a = 0; a < dim(); ++a) {
      auto b = axis_bin(a, x[a]);
      if (!b) return std::nullopt;
      idx = idx * (edges_[a].size() - 1) + *b;
    }
    return idx;
  }

  double bin_volume(std::size_t flat) const {
    double v = 1.0;
    for (std::size_t a = dim(); a-- > 0;) {
      const std::size_t nb = edges_[a].size() - 1;
      const std::size_t k = flat % nb;
      flat /= nb;
      v *= edges_[a][k + 1] - edges_[a][k];
    }
    return v;
  }

  double log_prob(std::span<const double> x) const {
    if (x.size() != dim()) throw ShapeError("HistogramModel::log_prob: dimension mismatch");
    auto b = flat_bin(x);
    if (!b) return -std::numeric_limits<double>::infinity();
    return std::log(densities_[*b]);
  }

 private:
  std::vector<Vector> edges_;
  Vector densities_;
};

/// Maximum-likelihood histogram: density of bin k is N_k / (N |B_k|).
inline HistogramModel histogram_fit(const Matrix& data, std::vector<Vector> edges) {
  if (data.rows() == 0) throw InsufficientDataError("histogram_fit: empty data");
  if (edges.size() != data.cols()) throw ShapeError("histogram_fit: one edge list per column required");
  std::size_t cells = 1;
  for (const auto& e : edges) cells *= e.size() >= 2 ? e.size() - 1 : 0;
  HistogramModel shape(edges, Vector(cells, 0.0));
  Vector counts(cells, 0.0);
  for (std::size_t n = 0; n < data.rows(); ++n) {
    auto b = shape.flat_bin(data.row(n));
    if (!b) throw RangeError("histogram_fit: datapoint " + std::to_string(n) + " outside edges", n);
    counts[*b] += 1.0;
  }
  const double total = static_cast<double>(data.rows());
  for (std::size_t k = 0; k < cells; ++k) counts[k] /= total * shape.bin_volume(k);
  return HistogramModel(std::move(edges), std::move(counts));
}

// ---------------------------------------------------------------------------
// Kernel density estimation

enum class KdeKernel { gaussian, epanechnikov };

struct KdeModel {
  Matrix points;
  double bandwidth = 1.0;
  KdeKernel kernel = KdeKernel::gaussian;

  KdeModel() = default;
  KdeModel(Matrix pts, double eps, KdeKernel k) : points(std::move(pts)), bandwidth(eps), kernel(k) {
    if (!(bandwidth > 0.0)) throw DegenerateDataError("KDE bandwidth must be positive");
    if (points.rows() == 0) throw InsufficientDataError("KDE needs at least one training point");
  }
  std::size_t dim() const noexcept { return points.cols(); }
};

/// log of (1/N) Σ k_ε(x − xₙ) with k_ε(u) = ε^{-D} k₁(u/ε). Epanechnikov is the
/// product kernel (3/4)^D Π(1 − u_d²) on the closed cube |u_d| ≤ 1.
inline double kde_log_prob(const KdeModel& model, std::span<const double> x) {
  const std::size_t d = model.dim();
  if (x.size() != d) throw ShapeError("kde_log_prob: dimension mismatch");
  const double eps = model.bandwidth;
  const double dd = static_cast<double>(d);
  const double inv_eps = 1.0 / eps;
  Vector terms;
  terms.reserve(model.points.rows());
  if (model.kernel == KdeKernel::gaussian) {
    const double norm = -0.5 * dd * std::log(2.0 * std::numbers::pi) - dd * std::log(eps);
    for (std::size_t n = 0; n < model.points.rows(); ++n) {
      auto p = model.points.row(n);
      double q = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double u = (x[j] - p[j]) * inv_eps;
        q += u * u;
      }
      terms.push_back(norm - 0.5 * q);
    }
  } else {
    const double norm = dd * std::log(0.75) - dd * std::log(eps);
    for (std::size_t n = 0; n < model.points.rows(); ++n) {
      auto p = model.points.row(n);
      double lp = norm;
      for (std::size_t j = 0; j < d && std::isfinite(lp); ++j) {
        const double u = (x[j] - p[j]) * inv_eps;
        lp = std::abs(u) <= 1.0 ? lp + std::log1p(-u * u) : -std::numeric_limits<double>::infinity();
      }
      terms.push_back(lp);
    }
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(model.points.rows()));
}

enum class BandwidthRule { scott, silverman };

/// Mean of the per-column sample standard deviations (divisor N − 1).
inline double mean_axis_std(const Matrix& data) {
  const Vector mu = column_mean(data);
  double total = 0.0;
  for (std::size_t j = 0; j < data.cols(); ++j) {
    double ss = 0.0;
    for (std::size_t n = 0; n < data.rows(); ++n) {
      const double r = data(n, j) - mu[j];
      ss += r * r;
    }
    total += std::sqrt(ss / static_cast<double>(data.rows() - 1));
  }
  return total / static_cast<double>(data.cols());
}

/// Scott: σ̂ N^{-1/(D+4)}; Silverman: σ̂ (4/(D+2))^{1/(D+4)} N^{-1/(D+4)}.
inline double bandwidth_rule(const Matrix& data, BandwidthRule rule) {
  if (data.rows() < 2) throw InsufficientDataError("bandwidth_rule needs at least 2 rows");
  const double sigma = mean_axis_std(data);
  if (!(sigma > 0.0)) throw DegenerateDataError("bandwidth_rule: zero sample variance");
  const double d = static_cast<double>(data.cols());
  const double n = static_cast<double>(data.rows());
  const double scott = sigma * std::pow(n, -1.0 / (d + 4.0));
  if (rule == BandwidthRule::scott) return scott;
  return scott * std::pow(4.0 / (d + 2.0), 1.0 / (d + 4.0));
}

}  // namespace lfi
