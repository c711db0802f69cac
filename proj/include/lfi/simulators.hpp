#pragma once

// Benchmark simulators: a conjugate Gaussian toy, a stochastic Lotka–Volterra
// predator–prey model simulated exactly with Gillespie's algorithm, and an
// M/G/1 queue. All emit summary vectors directly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lfi/lv_constants.hpp"
#include "lfi/math_util.hpp"
#include "lfi/simulator.hpp"

namespace lfi {

struct GaussianToySettings {
  std::size_t dim = 1;
  double prior_mean = 0.0;
  double prior_variance = 1.0;
  double noise_variance = 1.0;
};

/// θ ~ N(μ_p, σ_p² I), x | θ ~ N(θ, σ² I).
class GaussianToy final : public Simulator {
 public:
  explicit GaussianToy(GaussianToySettings s = {}) : s_(s) {
    if (s_.dim < 1) throw ConfigError("E_CONFIG_SIMULATOR", "gaussian_toy: dim must be at least 1");
    if (!(s_.prior_variance > 0.0) || !(s_.noise_variance > 0.0))
      throw ConfigError("E_CONFIG_SIMULATOR", "gaussian_toy: variances must be positive");
  }

  const GaussianToySettings& settings() const noexcept { return s_; }
  std::string name() const override { return "gaussian_toy"; }
  std::size_t param_dim() const override { return s_.dim; }
  std::size_t data_dim() const override { return s_.dim; }

  Vector prior_sample(RngStream& rng) const override {
    Vector t(s_.dim);
    const double sd = std::sqrt(s_.prior_variance);
    for (double& v : t) v = s_.prior_mean + sd * rng.normal();
    return t;
  }
  double prior_log_prob(std::span<const double> theta) const override { return prior().log_prob(theta); }
  Vector simulate(std::span<const double> theta, RngStream& rng) const override {
    if (theta.size() != s_.dim) throw ShapeError("gaussian_toy: parameter has wrong dimension");
    Vector x(s_.dim);
    const double sd = std::sqrt(s_.noise_variance);
    for (std::size_t i = 0; i < s_.dim; ++i) x[i] = theta[i] + sd * rng.normal();
    return x;
  }

  std::optional<GaussianDensity> exact_posterior(std::span<const double> x0) const override {
    if (x0.size() != s_.dim) throw ShapeError("gaussian_toy: observation has wrong dimension");
    const double prec = 1.0 / s_.prior_variance + 1.0 / s_.noise_variance;
    Vector m(s_.dim);
    for (std::size_t i = 0; i < s_.dim; ++i)
      m[i] = (s_.prior_mean / s_.prior_variance + x0[i] / s_.noise_variance) / prec;
    return GaussianDensity::isotropic(std::move(m), 1.0 / prec);
  }
  std::optional<GaussianDensity> gaussian_prior() const override { return prior(); }
  Vector prior_std() const override { return Vector(s_.dim, std::sqrt(s_.prior_variance)); }

 private:
  GaussianDensity prior() const { return GaussianDensity::isotropic(Vector(s_.dim, s_.prior_mean), s_.prior_variance); }
  GaussianToySettings s_;
};

// ---------------------------------------------------------------------------

struct LotkaVolterraSettings {
  std::int64_t initial_prey = 50;
  std::int64_t initial_predators = 100;
  double duration = 30.0;
  std::size_t grid_size = 151;
  std::size_t max_events = 1'000'000;
  double log_rate_low = -5.0;
  double log_rate_high = 2.0;
  bool standardize = true;
};

struct LvTrajectory {
  Vector prey;
  Vector predators;
  std::size_t events = 0;
  std::size_t prey_deaths_by_predation = 0;
  std::size_t predator_births = 0;
  bool truncated = false;
};

/// Four reactions with rates θ = exp(log θ):
///   prey birth      θ₁·X        X → X+1
///   predation       θ₂·X·Y      X → X−1, Y → Y+1
///   predator death  θ₃·Y        Y → Y−1
///   prey death      θ₄·X        X → X−1
/// Parameters are the log-rates; the prior is uniform on a box.
class LotkaVolterra final : public Simulator {
 public:
  static constexpr std::size_t n_summaries = 9;

  explicit LotkaVolterra(LotkaVolterraSettings s = {}) : s_(s) {
    if (!(s_.duration > 0.0)) throw ConfigError("E_CONFIG_SIMULATOR", "lotka_volterra: duration must be positive");
    if (s_.grid_size < 3) throw ConfigError("E_CONFIG_SIMULATOR", "lotka_volterra: grid needs at least 3 points");
    if (s_.initial_prey < 0 || s_.initial_predators < 0)
      throw ConfigError("E_CONFIG_SIMULATOR", "lotka_volterra: counts must be non-negative");
    if (!(s_.log_rate_low < s_.log_rate_high))
      throw ConfigError("E_CONFIG_SIMULATOR", "lotka_volterra: empty prior box");
  }

  const LotkaVolterraSettings& settings() const noexcept { return s_; }
  std::string name() const override { return "lotka_volterra"; }
  std::size_t param_dim() const override { return 4; }
  std::size_t data_dim() const override { return n_summaries; }
  bool prior_is_uniform() const override { return true; }

  Vector prior_sample(RngStream& rng) const override {
    Vector t(4);
    for (double& v : t) v = rng.uniform(s_.log_rate_low, s_.log_rate_high);
    return t;
  }
  double prior_log_prob(std::span<const double> theta) const override {
    if (theta.size() != 4) throw ShapeError("lotka_volterra: parameter has wrong dimension");
    for (double v : theta)
      if (!(v >= s_.log_rate_low && v <= s_.log_rate_high)) return neg_inf;
    return -4.0 * std::log(s_.log_rate_high - s_.log_rate_low);
  }
  Vector prior_std() const override { return Vector(4, (s_.log_rate_high - s_.log_rate_low) / std::sqrt(12.0)); }

  /// Gillespie simulation at the given rates (not log-rates).
  LvTrajectory simulate_rates(std::span<const double> rates, RngStream& rng) const {
    if (rates.size() != 4) throw ShapeError("lotka_volterra: four rates required");
    LvTrajectory tr;
    tr.prey.assign(s_.grid_size, 0.0);
    tr.predators.assign(s_.grid_size, 0.0);
    std::int64_t x = s_.initial_prey, y = s_.initial_predators;
    const double dt_grid = s_.duration / static_cast<double>(s_.grid_size - 1);
    double t = 0.0;
    std::size_t k = 0;
    auto record_until = [&](double t_next) {
      while (k < s_.grid_size && static_cast<double>(k) * dt_grid < t_next) {
        tr.prey[k] = static_cast<double>(x);
        tr.predators[k] = static_cast<double>(y);
        ++k;
      }
    };
    std::array<double, 4> a{};
    while (k < s_.grid_size) {
      const double xd = static_cast<double>(x), yd = static_cast<double>(y);
      a = {rates[0] * xd, rates[1] * xd * yd, rates[2] * yd, rates[3] * xd};
      const double total = a[0] + a[1] + a[2] + a[3];
      if (!(total > 0.0)) {
        record_until(std::numeric_limits<double>::infinity());
        break;
      }
      const double t_next = t + rng.exponential(total);
      record_until(t_next);
      if (k >= s_.grid_size) break;
      if (tr.events == s_.max_events) {
        tr.truncated = true;
        record_until(std::numeric_limits<double>::infinity());
        break;
      }
      const double u = rng.uniform() * total;
      if (u < a[0]) {
        ++x;
      } else if (u < a[0] + a[1]) {
        --x;
        ++tr.prey_deaths_by_predation;
        ++y;
        ++tr.predator_births;
      } else if (u < a[0] + a[1] + a[2]) {
        --y;
      } else {
        --x;
      }
      // Guard against round-off selecting a reaction whose propensity is 0.
      x = std::max<std::int64_t>(x, 0);
      y = std::max<std::int64_t>(y, 0);
      ++tr.events;
      t = t_next;
    }
    return tr;
  }

  /// Unstandardized summaries: means, log(var + 1), lag-1 and lag-2
  /// autocorrelations of both series, and their lag-0 cross-correlation.
  static Vector raw_summaries(const LvTrajectory& tr) {
    const std::size_t n = tr.prey.size();
    auto moments = [n](const Vector& s) {
      double m = 0.0;
      for (double v : s) m += v;
      m /= static_cast<double>(n);
      double var = 0.0;
      for (double v : s) var += (v - m) * (v - m);
      return std::pair{m, var / static_cast<double>(n)};
    };
    auto autocorr = [n](const Vector& s, double m, double var, std::size_t lag) {
      if (!(var > 0.0)) return 0.0;
      double c = 0.0;
      for (std::size_t t = 0; t + lag < n; ++t) c += (s[t] - m) * (s[t + lag] - m);
      return c / (static_cast<double>(n) * var);
    };
    const auto [mx, vx] = moments(tr.prey);
    const auto [my, vy] = moments(tr.predators);
    double cross = 0.0;
    if (vx > 0.0 && vy > 0.0) {
      for (std::size_t t = 0; t < n; ++t) cross += (tr.prey[t] - mx) * (tr.predators[t] - my);
      cross /= static_cast<double>(n) * std::sqrt(vx * vy);
    }
    return {mx,
            my,
            std::log(vx + 1.0),
            std::log(vy + 1.0),
            autocorr(tr.prey, mx, vx, 1),
            autocorr(tr.prey, mx, vx, 2),
            autocorr(tr.predators, my, vy, 1),
            autocorr(tr.predators, my, vy, 2),
            cross};
  }

  Vector standardize(Vector raw) const {
    if (!s_.standardize) return raw;
    for (std::size_t i = 0; i < n_summaries; ++i)
      raw[i] = (raw[i] - lv_constants::summary_mean[i]) / lv_constants::summary_scale[i];
    return raw;
  }

  Vector simulate(std::span<const double> theta, RngStream& rng) const override {
    if (theta.size() != 4) throw ShapeError("lotka_volterra: parameter has wrong dimension");
    const std::array<double, 4> rates{std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2]), std::exp(theta[3])};
    return standardize(raw_summaries(simulate_rates(rates, rng)));
  }

 private:
  LotkaVolterraSettings s_;
};

// ---------------------------------------------------------------------------

struct Mg1Settings {
  std::size_t customers = 50;
  double service_low_max = 10.0;    // θ₁ ~ U(0, this)
  double service_width_max = 10.0;  // θ₂ − θ₁ ~ U(0, this)
  double arrival_rate_max = 1.0 / 3.0;
};

struct Mg1Trajectory {
  Vector arrivals;
  Vector departures;
};

/// Single-server FIFO queue: service ~ U(θ₁, θ₂), inter-arrival ~ Exp(θ₃).
/// Summary: quantiles (0, ¼, ½, ¾, 1) of consecutive inter-departure gaps.
class Mg1 final : public Simulator {
 public:
  static constexpr std::size_t n_summaries = 5;

  explicit Mg1(Mg1Settings s = {}) : s_(s) {
    if (s_.customers < 10) throw ConfigError("E_CONFIG_SIMULATOR", "mg1: at least 10 customers required");
    if (!(s_.service_low_max > 0.0 && s_.service_width_max > 0.0 && s_.arrival_rate_max > 0.0))
      throw ConfigError("E_CONFIG_SIMULATOR", "mg1: prior bounds must be positive");
  }

  const Mg1Settings& settings() const noexcept { return s_; }
  std::string name() const override { return "mg1"; }
  std::size_t param_dim() const override { return 3; }
  std::size_t data_dim() const override { return n_summaries; }
  bool prior_is_uniform() const override { return true; }

  Vector prior_sample(RngStream& rng) const override {
    const double t1 = rng.uniform(0.0, s_.service_low_max);
    const double t2 = t1 + rng.uniform(0.0, s_.service_width_max);
    return {t1, t2, rng.uniform(0.0, s_.arrival_rate_max)};
  }
  double prior_log_prob(std::span<const double> theta) const override {
    if (theta.size() != 3) throw ShapeError("mg1: parameter has wrong dimension");
    const double w = theta[1] - theta[0];
    if (!(theta[0] >= 0.0 && theta[0] <= s_.service_low_max && w >= 0.0 && w <= s_.service_width_max &&
          theta[2] >= 0.0 && theta[2] <= s_.arrival_rate_max))
      return neg_inf;
    return -std::log(s_.service_low_max * s_.service_width_max * s_.arrival_rate_max);
  }
  Vector prior_std() const override {
    const double r12 = std::sqrt(12.0);
    return {s_.service_low_max / r12, std::hypot(s_.service_low_max, s_.service_width_max) / r12,
            s_.arrival_rate_max / r12};
  }

  /// Lindley recursion: dᵢ = max(aᵢ, dᵢ₋₁) + sᵢ.
  Mg1Trajectory simulate_detailed(std::span<const double> theta, RngStream& rng) const {
    if (theta.size() != 3) throw ShapeError("mg1: parameter has wrong dimension");
    Mg1Trajectory tr;
    tr.arrivals.resize(s_.customers);
    tr.departures.resize(s_.customers);
    double a = 0.0, d = 0.0;
    for (std::size_t i = 0; i < s_.customers; ++i) {
      a += rng.exponential(theta[2]);
      const double service = rng.uniform(theta[0], theta[1]);
      d = std::max(a, d) + service;
      tr.arrivals[i] = a;
      tr.departures[i] = d;
    }
    return tr;
  }

  Vector simulate(std::span<const double> theta, RngStream& rng) const override {
    const Mg1Trajectory tr = simulate_detailed(theta, rng);
    Vector gaps(s_.customers - 1);
    for (std::size_t i = 1; i < s_.customers; ++i) gaps[i - 1] = tr.departures[i] - tr.departures[i - 1];
    std::sort(gaps.begin(), gaps.end());
    Vector q(n_summaries);
    for (std::size_t k = 0; k < n_summaries; ++k)
      q[k] = sorted_quantile(gaps, static_cast<double>(k) / static_cast<double>(n_summaries - 1));
    return q;
  }

 private:
  Mg1Settings s_;
};

}  // namespace lfi
