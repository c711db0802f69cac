#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>

#include "lfi/gaussian.hpp"

namespace lfi {

/// Contract every simulator model implements: a prior over θ and a
/// stochastic forward model θ → x (x is already a summary vector).
class Simulator {
 public:
  virtual ~Simulator() = default;

  virtual std::string name() const = 0;
  virtual std::size_t param_dim() const = 0;
  virtual std::size_t data_dim() const = 0;

  virtual Vector prior_sample(RngStream& rng) const = 0;
  virtual double prior_log_prob(std::span<const double> theta) const = 0;
  /// Pure given (θ, rng state).
  virtual Vector simulate(std::span<const double> theta, RngStream& rng) const = 0;

  /// Closed-form posterior at x₀ when the model admits one (test oracle).
  virtual std::optional<GaussianDensity> exact_posterior(std::span<const double>) const { return std::nullopt; }

  /// The prior as a Gaussian, when it is one.
  virtual std::optional<GaussianDensity> gaussian_prior() const { return std::nullopt; }
  /// True when the prior density is constant on its support.
  virtual bool prior_is_uniform() const { return false; }
  /// Per-axis prior standard deviation (initial slice widths, scale hints).
  virtual Vector prior_std() const = 0;

  bool in_support(std::span<const double> theta) const { return std::isfinite(prior_log_prob(theta)); }
};

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

}  // namespace lfi
