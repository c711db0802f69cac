#pragma once

// Approximate Bayesian computation: rejection, smooth rejection, MCMC-ABC,
// pseudo-marginal Metropolis–Hastings, importance-sampling ABC, SMC-ABC and
// linear regression adjustment.
//
// Simulation attempts are indexed: attempt j draws all of its randomness from
// RngStream(base, j) where base is one draw of the caller's stream. Results are
// therefore independent of how attempts are spread over worker threads.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfi/linalg.hpp"
#include "lfi/math_util.hpp"
#include "lfi/mdn.hpp"
#include "lfi/parallel.hpp"
#include "lfi/simulator.hpp"
#include "lfi/trace.hpp"

namespace lfi {

enum class DistanceNorm { euclidean, max };
enum class SmoothKernel { uniform, gaussian, epanechnikov };

inline double abc_distance(DistanceNorm norm, std::span<const double> a, std::span<const double> b) {
  return norm == DistanceNorm::euclidean ? euclidean_distance(a, b) : max_distance(a, b);
}

struct AbcConfig {
  double tolerance = std::numeric_limits<double>::infinity();
  DistanceNorm norm = DistanceNorm::euclidean;
  std::size_t max_simulations = 10'000'000;
  SmoothKernel kernel = SmoothKernel::gaussian;

  void validate() const {
    if (!(tolerance >= 0.0)) throw ConfigError("E_CONFIG_ABC", "tolerance must be non-negative");
    if (max_simulations < 1) throw ConfigError("E_CONFIG_ABC", "simulation budget must be at least 1");
  }
};

/// Accepted parameters with the summaries they produced.
struct AbcSamples {
  Matrix samples;
  Matrix data;
  Vector distances;
  std::size_t n_simulated = 0;
};

struct WeightedPopulation {
  Matrix params;
  Vector weights;
  Matrix data;
  std::size_t n_simulated = 0;

  std::size_t size() const noexcept { return params.rows(); }
};

/// Raised when the simulation budget runs out; carries what was accepted so far.
class BudgetError : public Error {
 public:
  BudgetError(const std::string& what, AbcSamples partial, std::vector<RoundTrace> rounds = {})
      : Error("E_BUDGET", what), partial_(std::move(partial)), rounds_(std::move(rounds)) {}
  const AbcSamples& partial() const noexcept { return partial_; }
  const std::vector<RoundTrace>& completed_rounds() const noexcept { return rounds_; }

 private:
  AbcSamples partial_;
  std::vector<RoundTrace> rounds_;
};

/// Effective sample size (Σ wₙ)² / Σ wₙ². Weights are first divided by their
/// maximum so that equal weights contribute exactly 1 each.
inline double ess_estimate(std::span<const double> weights) {
  double top = 0.0;
  for (double w : weights) top = std::max(top, w);
  if (!(top > 0.0) || !std::isfinite(top)) throw DegenerateDataError("ESS: weights must be finite with a positive maximum");
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    const double r = w / top;
    s += r;
    s2 += r * r;
  }
  return std::clamp(s * s / s2, 1.0, static_cast<double>(weights.size()));
}
inline double ess_estimate(const WeightedPopulation& pop) { return ess_estimate(pop.weights); }

namespace detail {

struct Attempt {
  bool simulated = false;
  bool accepted = false;
  Vector theta;
  Vector x;
  double distance = std::numeric_limits<double>::infinity();
};

// Runs indexed attempts in order until `n_accept` are accepted or `budget`
// simulations have been spent. Attempt j is evaluated with RngStream(base, j).
template <class AttemptFn>
AbcSamples accept_first(std::size_t n_accept, std::size_t budget, std::uint64_t base, AttemptFn&& attempt_fn) {
  if (budget < n_accept) throw ConfigError("E_CONFIG_ABC", "simulation budget is smaller than the number of acceptances");
  AbcSamples out;
  std::size_t next = 0;
  std::size_t spent = 0;
  std::size_t accepted = 0;
  while (accepted < n_accept) {
    const std::size_t remaining = n_accept - accepted;
    const double rate = spent > 0 ? std::max(static_cast<double>(accepted) / static_cast<double>(spent), 1e-3) : 1.0;
    std::size_t chunk = static_cast<std::size_t>(std::ceil(static_cast<double>(remaining) / rate * 1.1));
    chunk = std::clamp<std::size_t>(chunk, std::min<std::size_t>(remaining, 64) + 0, std::size_t{1} << 16);
    chunk = std::max<std::size_t>(chunk, 1);
    chunk = std::min(chunk, budget - spent + chunk / 2 + 1);
    std::vector<Attempt> results(chunk);
    parallel_for(0, chunk, [&](std::size_t i) {
      RngStream r(base, next + i);
      results[i] = attempt_fn(r);
    });
    for (std::size_t i = 0; i < chunk && accepted < n_accept; ++i) {
      Attempt& a = results[i];
      if (a.simulated) {
        if (spent == budget) {
          out.n_simulated = spent;
          throw BudgetError("simulation budget exhausted after " + std::to_string(spent) + " simulations with " +
                                std::to_string(accepted) + " acceptances",
                            std::move(out));
        }
        ++spent;
      }
      if (a.accepted) {
        out.samples.append_row(a.theta);
        out.data.append_row(a.x);
        out.distances.push_back(a.distance);
        ++accepted;
      }
    }
    next += chunk;
  }
  out.n_simulated = spent;
  return out;
}

inline Vector axis_weighted_std(const Matrix& params, std::span<const double> w) {
  const std::size_t d = params.cols();
  Vector mean(d, 0.0), sd(d, 0.0);
  for (std::size_t n = 0; n < params.rows(); ++n)
    for (std::size_t i = 0; i < d; ++i) mean[i] += w[n] * params(n, i);
  for (std::size_t n = 0; n < params.rows(); ++n)
    for (std::size_t i = 0; i < d; ++i) {
      const double r = params(n, i) - mean[i];
      sd[i] += w[n] * r * r;
    }
  for (double& s : sd) s = std::sqrt(s);
  return sd;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Independent draws from p(θ | ‖x − x₀‖ ≤ ε).
inline AbcSamples rejection_abc(const Simulator& sim, std::span<const double> x0, const AbcConfig& cfg,
                                std::size_t n_accept, RngStream& rng) {
  cfg.validate();
  if (x0.size() != sim.data_dim()) throw ShapeError("rejection_abc: observation has wrong dimension");
  const Vector obs(x0.begin(), x0.end());
  return detail::accept_first(n_accept, cfg.max_simulations, rng.next_u64(), [&](RngStream& r) {
    detail::Attempt a;
    a.theta = sim.prior_sample(r);
    a.x = sim.simulate(a.theta, r);
    a.simulated = true;
    a.distance = abc_distance(cfg.norm, a.x, obs);
    a.accepted = a.distance <= cfg.tolerance;
    return a;
  });
}

inline double smoothing_kernel(SmoothKernel k, double scaled_distance) {
  switch (k) {
    case SmoothKernel::uniform: return scaled_distance <= 1.0 ? 1.0 : 0.0;
    case SmoothKernel::gaussian: return std::exp(-0.5 * scaled_distance * scaled_distance);
    case SmoothKernel::epanechnikov: return std::max(0.0, 1.0 - scaled_distance * scaled_distance);
  }
  return 0.0;
}

/// N prior draws weighted by k_ε(x₀ − xₙ).
inline WeightedPopulation smooth_rejection_abc(const Simulator& sim, std::span<const double> x0, SmoothKernel kernel,
                                               double eps, std::size_t n, RngStream& rng,
                                               DistanceNorm norm = DistanceNorm::euclidean) {
  if (n < 1) throw ConfigError("E_CONFIG_ABC", "smooth_rejection_abc needs N >= 1");
  if (!(eps > 0.0)) throw ConfigError("E_CONFIG_ABC", "smoothing width must be positive");
  const std::uint64_t base = rng.next_u64();
  std::vector<Vector> thetas(n), xs(n);
  Vector w(n);
  parallel_for(0, n, [&](std::size_t i) {
    RngStream r(base, i);
    thetas[i] = sim.prior_sample(r);
    xs[i] = sim.simulate(thetas[i], r);
    w[i] = smoothing_kernel(kernel, abc_distance(norm, xs[i], x0) / eps);
  });
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) throw DegeneratePopulationError("every smoothing-kernel weight is zero");
  WeightedPopulation pop;
  for (std::size_t i = 0; i < n; ++i) {
    pop.params.append_row(thetas[i]);
    pop.data.append_row(xs[i]);
    w[i] /= total;
  }
  pop.weights = std::move(w);
  pop.n_simulated = n;
  return pop;
}

struct McmcAbcResult {
  Matrix chain;
  std::size_t n_simulated = 0;
  std::size_t n_accepted_moves = 0;
};

/// Gaussian random-walk MCMC-ABC: a move is accepted iff the simulated data hit
/// the ε-ball and a uniform draw falls below the prior ratio.
inline McmcAbcResult mcmc_abc_chain(const Simulator& sim, std::span<const double> x0, double eps,
                                    std::span<const double> proposal_std, std::span<const double> theta_init,
                                    std::size_t n_steps, RngStream& rng, DistanceNorm norm = DistanceNorm::euclidean) {
  const std::size_t d = sim.param_dim();
  if (proposal_std.size() != d || theta_init.size() != d) throw ShapeError("mcmc_abc_chain: dimension mismatch");
  McmcAbcResult out;
  out.chain = Matrix(n_steps, d);
  Vector theta(theta_init.begin(), theta_init.end());
  double lp = sim.prior_log_prob(theta);
  Vector prop(d);
  for (std::size_t s = 0; s < n_steps; ++s) {
    for (std::size_t i = 0; i < d; ++i) prop[i] = theta[i] + proposal_std[i] * rng.normal();
    const double lp_new = sim.prior_log_prob(prop);
    const double log_u = std::log(rng.uniform_open());
    if (std::isfinite(lp_new)) {
      const Vector x = sim.simulate(prop, rng);
      ++out.n_simulated;
      if (abc_distance(norm, x, x0) <= eps && log_u < lp_new - lp) {
        theta = prop;
        lp = lp_new;
        ++out.n_accepted_moves;
      }
    }
    std::copy(theta.begin(), theta.end(), out.chain.row(s).begin());
  }
  return out;
}

/// MCMC-ABC started from the first rejection-ABC acceptance.
inline McmcAbcResult mcmc_abc(const Simulator& sim, std::span<const double> x0, const AbcConfig& cfg,
                              std::span<const double> proposal_std, std::size_t n_steps, RngStream& rng) {
  AbcSamples init = rejection_abc(sim, x0, cfg, 1, rng);
  McmcAbcResult r = mcmc_abc_chain(sim, x0, cfg.tolerance, proposal_std, init.samples.row(0), n_steps, rng, cfg.norm);
  r.n_simulated += init.n_simulated;
  return r;
}

struct PseudoMarginalState {
  Vector theta;
  double likelihood_estimate = 0.0;  // fraction of inner simulations within ε
};

/// One pseudo-marginal MH step with a Gaussian random-walk proposal; the
/// likelihood estimate is part of the chain state.
inline PseudoMarginalState pseudo_marginal_mh_step(const Simulator& sim, std::span<const double> x0, double eps,
                                                   std::size_t n_inner, const PseudoMarginalState& state,
                                                   std::span<const double> proposal_std, RngStream& rng,
                                                   DistanceNorm norm = DistanceNorm::euclidean) {
  if (n_inner < 1) throw ConfigError("E_CONFIG_ABC", "pseudo-marginal MH needs at least one inner simulation");
  const std::size_t d = state.theta.size();
  Vector prop(d);
  for (std::size_t i = 0; i < d; ++i) prop[i] = state.theta[i] + proposal_std[i] * rng.normal();
  const double log_u = std::log(rng.uniform_open());
  const double lp_new = sim.prior_log_prob(prop);
  if (!std::isfinite(lp_new)) return state;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n_inner; ++k)
    if (abc_distance(norm, sim.simulate(prop, rng), x0) <= eps) ++hits;
  const double l_new = static_cast<double>(hits) / static_cast<double>(n_inner);
  if (l_new == 0.0) return state;
  const double log_ratio = std::log(l_new) + lp_new - std::log(state.likelihood_estimate) -
                           sim.prior_log_prob(state.theta);
  if (log_u < log_ratio) return {prop, l_new};
  return state;
}

/// Sampling distribution used by importance-sampling ABC.
class ProposalDensity {
 public:
  virtual ~ProposalDensity() = default;
  virtual Vector sample(RngStream& rng) const = 0;
  virtual double log_prob(std::span<const double> theta) const = 0;
};

class PriorProposal final : public ProposalDensity {
 public:
  explicit PriorProposal(const Simulator& sim) : sim_(sim) {}
  Vector sample(RngStream& rng) const override { return sim_.prior_sample(rng); }
  double log_prob(std::span<const double> t) const override { return sim_.prior_log_prob(t); }

 private:
  const Simulator& sim_;
};

class GaussianProposal final : public ProposalDensity {
 public:
  explicit GaussianProposal(GaussianDensity g) : g_(std::move(g)) {}
  Vector sample(RngStream& rng) const override { return g_.sample(rng); }
  double log_prob(std::span<const double> t) const override { return g_.log_prob(t); }

 private:
  GaussianDensity g_;
};

class MixtureProposal final : public ProposalDensity {
 public:
  explicit MixtureProposal(GaussianMixture m) : m_(std::move(m)) {}
  Vector sample(RngStream& rng) const override { return m_.sample(rng); }
  double log_prob(std::span<const double> t) const override { return m_.log_prob(t); }

 private:
  GaussianMixture m_;
};

namespace detail {
inline WeightedPopulation importance_weight(AbcSamples acc, const Simulator& sim, const ProposalDensity& proposal) {
  const std::size_t n = acc.samples.rows();
  Vector logw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lp = sim.prior_log_prob(acc.samples.row(i));
    const double lq = proposal.log_prob(acc.samples.row(i));
    if (!std::isfinite(lq) && std::isfinite(lp))
      throw DegeneratePopulationError("proposal has zero density at an accepted parameter (infinite weight)");
    logw[i] = lp - lq;
  }
  WeightedPopulation pop{std::move(acc.samples), softmax(logw), std::move(acc.data), acc.n_simulated};
  for (double w : pop.weights)
    if (!std::isfinite(w)) throw DegeneratePopulationError("non-finite importance weight");
  return pop;
}
}  // namespace detail

/// Importance-sampling ABC: each slot repeats proposal draws until the
/// simulation lands within ε; weights ∝ prior / proposal.
inline WeightedPopulation is_abc(const Simulator& sim, std::span<const double> x0, const AbcConfig& cfg,
                                 const ProposalDensity& proposal, std::size_t n, RngStream& rng) {
  cfg.validate();
  const Vector obs(x0.begin(), x0.end());
  AbcSamples acc = detail::accept_first(n, cfg.max_simulations, rng.next_u64(), [&](RngStream& r) {
    detail::Attempt a;
    a.theta = proposal.sample(r);
    if (!sim.in_support(a.theta)) return a;
    a.x = sim.simulate(a.theta, r);
    a.simulated = true;
    a.distance = abc_distance(cfg.norm, a.x, obs);
    a.accepted = a.distance <= cfg.tolerance;
    return a;
  });
  return detail::importance_weight(std::move(acc), sim, proposal);
}

struct SmcAbcConfig {
  std::vector<double> schedule;
  std::size_t population = 1000;
  std::optional<double> ess_min;  // default N/2
  double bandwidth_factor = std::sqrt(2.0);
  double min_std = 1e-6;
  AbcConfig abc{};  // norm + per-round simulation budget
};

struct SmcAbcResult {
  WeightedPopulation population;
  std::vector<RoundTrace> rounds;
  std::size_t total_simulations = 0;
};

/// Weighted Gaussian perturbation mixture Σ_m w_m N(θ; θ_m, diag(std²)).
class PerturbationMixture final : public ProposalDensity {
 public:
  PerturbationMixture(const WeightedPopulation& pop, Vector std) : pop_(pop), std_(std::move(std)) {
    log_w_.resize(pop.size());
    for (std::size_t m = 0; m < pop.size(); ++m) log_w_[m] = std::log(pop.weights[m]);
    log_norm_ = 0.0;
    for (double s : std_) log_norm_ -= std::log(s) + 0.5 * std::log(2.0 * std::numbers::pi);
  }
  Vector sample(RngStream& rng) const override {
    const std::size_t m = rng.categorical(pop_.weights);
    Vector t = pop_.params.row_copy(m);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += std_[i] * rng.normal();
    return t;
  }
  double log_prob(std::span<const double> theta) const override {
    Vector terms(pop_.size());
    for (std::size_t m = 0; m < pop_.size(); ++m) {
      auto c = pop_.params.row(m);
      double q = 0.0;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double z = (theta[i] - c[i]) / std_[i];
        q += z * z;
      }
      terms[m] = log_w_[m] + log_norm_ - 0.5 * q;
    }
    return log_sum_exp(terms);
  }
  const Vector& std() const noexcept { return std_; }

 private:
  const WeightedPopulation& pop_;
  Vector std_;
  Vector log_w_;
  double log_norm_;
};

inline SmcAbcResult smc_abc(const Simulator& sim, std::span<const double> x0, const SmcAbcConfig& cfg,
                            RngStream& rng) {
  if (cfg.schedule.empty()) throw ConfigError("E_CONFIG_SCHEDULE", "SMC-ABC needs a tolerance schedule");
  for (std::size_t t = 1; t < cfg.schedule.size(); ++t)
    if (!(cfg.schedule[t] < cfg.schedule[t - 1]))
      throw ConfigError("E_CONFIG_SCHEDULE", "SMC-ABC schedule must be strictly decreasing");
  if (cfg.population < 2) throw ConfigError("E_CONFIG_ABC", "SMC-ABC needs N >= 2");
  const double ess_min = cfg.ess_min.value_or(0.5 * static_cast<double>(cfg.population));

  SmcAbcResult res;
  AbcConfig round_cfg = cfg.abc;
  for (std::size_t t = 0; t < cfg.schedule.size(); ++t) {
    round_cfg.tolerance = cfg.schedule[t];
    RoundTrace trace;
    trace.round = t + 1;
    trace.diagnostics["epsilon"] = cfg.schedule[t];
    try {
      if (t == 0) {
        AbcSamples acc = rejection_abc(sim, x0, round_cfg, cfg.population, rng);
        const std::size_t n = acc.samples.rows();
        res.population = WeightedPopulation{std::move(acc.samples), Vector(n, 1.0 / static_cast<double>(n)),
                                            std::move(acc.data), acc.n_simulated};
        trace.proposal = "prior";
      } else {
        Vector sd = detail::axis_weighted_std(res.population.params, res.population.weights);
        for (double& s : sd) s = std::max(cfg.bandwidth_factor * s, cfg.min_std);
        const PerturbationMixture proposal(res.population, sd);
        WeightedPopulation next = is_abc(sim, x0, round_cfg, proposal, cfg.population, rng);
        trace.proposal = "perturbation-mixture";
        res.population = std::move(next);
      }
    } catch (BudgetError& e) {
      throw BudgetError(e.what(), e.partial(), res.rounds);
    }
    const double ess = ess_estimate(res.population);
    trace.diagnostics["ess"] = ess;
    trace.diagnostics["resampled"] = 0.0;
    if (t > 0 && ess < ess_min) {
      WeightedPopulation resampled;
      for (std::size_t i = 0; i < res.population.size(); ++i) {
        const std::size_t m = rng.categorical(res.population.weights);
        resampled.params.append_row(res.population.params.row(m));
        resampled.data.append_row(res.population.data.row(m));
      }
      resampled.weights.assign(res.population.size(), 1.0 / static_cast<double>(res.population.size()));
      resampled.n_simulated = res.population.n_simulated;
      res.population = std::move(resampled);
      trace.diagnostics["resampled"] = 1.0;
    }
    trace.n_simulations = res.population.n_simulated;
    res.total_simulations += res.population.n_simulated;
    trace.cumulative_simulations = res.total_simulations;
    summarize_samples(res.population.params, res.population.weights, trace);
    res.rounds.push_back(std::move(trace));
  }
  return res;
}

/// Regression adjustment θ'ₙ = θₙ + A*(x₀ − xₙ) with A* from least squares of
/// θ on [x, 1]; a rank-deficient design is solved with a 1e-8 ridge.
inline Matrix linear_regression_adjust(const Matrix& params, const Matrix& data, std::span<const double> x0) {
  const std::size_t n = params.rows();
  const std::size_t p = params.cols();
  const std::size_t q = data.cols();
  if (data.rows() != n || x0.size() != q) throw ShapeError("linear_regression_adjust: shape mismatch");
  const std::size_t m = q + 1;
  Matrix xtx(m, m);
  Matrix xty(m, p);
  Vector row(m);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < q; ++j) row[j] = data(k, j);
    row[q] = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) xtx(i, j) += row[i] * row[j];
      for (std::size_t j = 0; j < p; ++j) xty(i, j) += row[i] * params(k, j);
    }
  }
  auto l = linalg::cholesky(xtx);
  if (!l) {
    for (std::size_t i = 0; i < m; ++i) xtx(i, i) += 1e-8;
    l = linalg::cholesky(xtx);
    if (!l) throw NumericError("linear_regression_adjust: design could not be regularized");
  }
  Matrix coef(m, p);  // rows 0..q-1 are A*ᵀ, row q is β*
  Vector col(m);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < m; ++i) col[i] = xty(i, j);
    const Vector b = linalg::cholesky_solve(*l, col);
    for (std::size_t i = 0; i < m; ++i) coef(i, j) = b[i];
  }
  Matrix out = params;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < p; ++j) {
      double shift = 0.0;
      for (std::size_t i = 0; i < q; ++i) shift += coef(i, j) * (x0[i] - data(k, i));
      out(k, j) += shift;
    }
  return out;
}

}  // namespace lfi
