#pragma once

#include <map>
#include <optional>
#include <string>

#include "lfi/matrix.hpp"

namespace lfi {

/// Per-round record of an inference run.
struct RoundTrace {
  std::size_t round = 0;
  std::size_t n_simulations = 0;
  std::size_t cumulative_simulations = 0;
  std::string proposal;
  Vector posterior_mean;
  Matrix posterior_covariance;
  std::optional<double> neg_log_true_params;
  std::optional<double> mmd;
  std::map<std::string, double> diagnostics;
  double wall_clock_seconds = 0.0;
};

/// Sample mean and (divisor-N) covariance of the rows of `samples`, optionally weighted.
inline void summarize_samples(const Matrix& samples, const Vector& weights, RoundTrace& t) {
  const std::size_t d = samples.cols();
  t.posterior_mean.assign(d, 0.0);
  t.posterior_covariance = Matrix(d, d);
  if (samples.rows() == 0) return;
  const double uniform = 1.0 / static_cast<double>(samples.rows());
  for (std::size_t n = 0; n < samples.rows(); ++n) {
    const double w = weights.empty() ? uniform : weights[n];
    for (std::size_t i = 0; i < d; ++i) t.posterior_mean[i] += w * samples(n, i);
  }
  for (std::size_t n = 0; n < samples.rows(); ++n) {
    const double w = weights.empty() ? uniform : weights[n];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        t.posterior_covariance(i, j) +=
            w * (samples(n, i) - t.posterior_mean[i]) * (samples(n, j) - t.posterior_mean[j]);
  }
}

}  // namespace lfi
