#pragma once

// Sequential neural inference: SNPE-A (analytic proposal correction),
// SNPE-B (importance-weighted training), SNL (likelihood model + MCMC), and
// SNL with MaxVar acquisition over a model ensemble. Also the axis-aligned
// slice sampler, the MMD two-sample statistic and neg-log-prob of θ_true.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfi/classic_density.hpp"
#include "lfi/maf.hpp"
#include "lfi/mdn.hpp"
#include "lfi/parallel.hpp"
#include "lfi/simulator.hpp"
#include "lfi/trace.hpp"
#include "lfi/training.hpp"

namespace lfi {

using LogDensityFn = std::function<double(std::span<const double>)>;

/// A run failed mid-way; carries the traces of the rounds that completed.
class RoundError : public Error {
 public:
  RoundError(std::string tag, const std::string& what, std::vector<RoundTrace> rounds)
      : Error(std::move(tag), what), rounds_(std::move(rounds)) {}
  const std::vector<RoundTrace>& completed_rounds() const noexcept { return rounds_; }

 private:
  std::vector<RoundTrace> rounds_;
};

// ---------------------------------------------------------------------------
// Diagnostics

/// −log of a Gaussian KDE (Scott bandwidth) of `samples`, evaluated at θ_true.
inline double neg_log_true_params(const Matrix& samples, std::span<const double> theta_true) {
  if (samples.rows() < 10) throw InsufficientDataError("neg_log_true_params needs at least 10 samples");
  if (theta_true.size() != samples.cols()) throw ShapeError("neg_log_true_params: dimension mismatch");
  const double eps = bandwidth_rule(samples, BandwidthRule::scott);
  return -kde_log_prob(KdeModel(samples, eps, KdeKernel::gaussian), theta_true);
}

/// Median pairwise Euclidean distance of the pooled rows of X and Y.
inline double median_pairwise_distance(const Matrix& x, const Matrix& y) {
  const Matrix pooled = vstack(x, y);
  const std::size_t n = pooled.rows();
  Vector d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.push_back(euclidean_distance(pooled.row(i), pooled.row(j)));
  if (d.empty()) return 0.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(d.begin(), mid);
  return 0.5 * (lower + upper);
}

namespace detail {

inline Matrix gaussian_gram(const Matrix& pooled, double bandwidth) {
  const std::size_t n = pooled.rows();
  Matrix k(n, n);
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < pooled.cols(); ++c) {
        const double r = pooled(i, c) - pooled(j, c);
        s += r * r;
      }
      k(i, j) = k(j, i) = std::exp(-s * inv);
    }
  }
  return k;
}

// Unbiased MMD² from a pooled Gram matrix; `label[i]` true for the X sample.
inline double mmd_from_gram(const Matrix& k, const std::vector<char>& label, std::size_t nx, std::size_t ny,
                            bool unbiased) {
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  const std::size_t n = label.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = k.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (unbiased && i == j) continue;
      const double v = row[j];
      if (label[i] && label[j]) sxx += v;
      else if (!label[i] && !label[j]) syy += v;
      else if (label[i]) sxy += v;
    }
  }
  const double fx = static_cast<double>(nx), fy = static_cast<double>(ny);
  if (unbiased) return sxx / (fx * (fx - 1.0)) + syy / (fy * (fy - 1.0)) - 2.0 * sxy / (fx * fy);
  return sxx / (fx * fx) + syy / (fy * fy) - 2.0 * sxy / (fx * fy);
}

inline Matrix checked_pool(const Matrix& x, const Matrix& y, bool unbiased, double& bandwidth) {
  if (x.rows() < (unbiased ? 2u : 1u) || y.rows() < (unbiased ? 2u : 1u))
    throw InsufficientDataError("MMD needs non-empty samples (at least 2 each for the unbiased estimate)");
  if (x.cols() != y.cols()) throw ShapeError("MMD: samples have different dimensions");
  bandwidth = median_pairwise_distance(x, y);
  if (!(bandwidth > 0.0)) throw DegenerateDataError("MMD: median pairwise distance is zero");
  return vstack(x, y);
}

}  // namespace detail

/// MMD² between the rows of X and Y with a Gaussian kernel whose bandwidth is
/// the median pairwise distance of the pooled sample.
inline double mmd_statistic(const Matrix& x, const Matrix& y, bool unbiased = true) {
  double bw = 0.0;
  const Matrix pooled = detail::checked_pool(x, y, unbiased, bw);
  std::vector<char> label(pooled.rows(), 0);
  std::fill(label.begin(), label.begin() + static_cast<std::ptrdiff_t>(x.rows()), 1);
  return detail::mmd_from_gram(detail::gaussian_gram(pooled, bw), label, x.rows(), y.rows(), unbiased);
}

struct MmdTest {
  double statistic = 0.0;
  double threshold = 0.0;  // (1 − level) quantile of the permutation distribution
  double p_value = 1.0;
  bool reject = false;
};

/// Permutation test of equal distributions; the kernel matrix (and its median
/// bandwidth) is computed once on the pooled sample and relabelled.
inline MmdTest mmd_permutation_test(const Matrix& x, const Matrix& y, std::size_t n_permutations, RngStream& rng,
                                    double level = 0.05) {
  double bw = 0.0;
  const Matrix pooled = detail::checked_pool(x, y, true, bw);
  const Matrix k = detail::gaussian_gram(pooled, bw);
  const std::size_t n = pooled.rows();
  std::vector<char> label(n, 0);
  std::fill(label.begin(), label.begin() + static_cast<std::ptrdiff_t>(x.rows()), 1);
  MmdTest t;
  t.statistic = detail::mmd_from_gram(k, label, x.rows(), y.rows(), true);
  Vector null(n_permutations);
  std::size_t at_least = 0;
  for (std::size_t p = 0; p < n_permutations; ++p) {
    for (std::size_t i = n; i > 1; --i) std::swap(label[i - 1], label[rng.uniform_index(i)]);
    null[p] = detail::mmd_from_gram(k, label, x.rows(), y.rows(), true);
    if (null[p] >= t.statistic) ++at_least;
  }
  std::sort(null.begin(), null.end());
  t.threshold = null.empty() ? std::numeric_limits<double>::infinity() : sorted_quantile(null, 1.0 - level);
  t.p_value = static_cast<double>(at_least + 1) / static_cast<double>(n_permutations + 1);
  t.reject = t.statistic > t.threshold;
  return t;
}

// ---------------------------------------------------------------------------
// Slice sampling

struct SliceConfig {
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  std::size_t max_steps_out = 20;
  std::size_t max_shrink = 200;
};

struct SliceChain {
  Matrix samples;
  Vector last;
  double last_log_prob = 0.0;
  std::size_t evaluations = 0;
};

/// One sweep over the axes updates each coordinate by univariate slice
/// sampling: stepping out from a randomly placed bracket of the axis width,
/// then shrinkage. Each returned state is `thin` sweeps after the previous.
inline SliceChain slice_sample_axis(const LogDensityFn& log_target, std::span<const double> theta_init, std::size_t n,
                                    std::span<const double> widths, RngStream& rng, const SliceConfig& cfg = {}) {
  const std::size_t d = theta_init.size();
  if (widths.size() != d) throw ShapeError("slice_sample_axis: one width per axis required");
  for (double w : widths)
    if (!(w > 0.0)) throw ConfigError("E_CONFIG_MCMC", "slice widths must be positive");
  if (cfg.thin < 1) throw ConfigError("E_CONFIG_MCMC", "thinning must be at least 1");
  SliceChain out;
  Vector x(theta_init.begin(), theta_init.end());
  double lp = log_target(x);
  ++out.evaluations;
  if (!std::isfinite(lp)) throw InitializationError("slice sampler: target is not finite at the initial state");

  auto sweep = [&] {
    for (std::size_t i = 0; i < d; ++i) {
      const double log_y = lp + std::log(rng.uniform_open());
      const double x0 = x[i];
      auto eval = [&](double v) {
        x[i] = v;
        ++out.evaluations;
        const double r = log_target(x);
        if (std::isnan(r)) throw NumericError("slice sampler: target returned NaN", i);
        return r;
      };
      double lo = x0 - widths[i] * rng.uniform();
      double hi = lo + widths[i];
      std::size_t j = static_cast<std::size_t>(std::floor(static_cast<double>(cfg.max_steps_out) * rng.uniform()));
      std::size_t k = cfg.max_steps_out - 1 - std::min(j, cfg.max_steps_out - 1);
      while (j-- > 0 && eval(lo) > log_y) lo -= widths[i];
      while (k-- > 0 && eval(hi) > log_y) hi += widths[i];
      std::size_t shrinks = 0;
      for (;;) {
        const double v = rng.uniform(lo, hi);
        const double lv = eval(v);
        if (lv > log_y) {
          lp = lv;
          break;
        }
        if (v < x0) lo = v;
        else hi = v;
        if (++shrinks >= cfg.max_shrink) {
          x[i] = x0;  // bracket collapsed onto the current point
          break;
        }
      }
    }
  };

  for (std::size_t b = 0; b < cfg.burn_in; ++b) sweep();
  out.samples = Matrix(n, d);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < cfg.thin; ++t) sweep();
    std::copy(x.begin(), x.end(), out.samples.row(s).begin());
  }
  out.last = x;
  out.last_log_prob = lp;
  return out;
}

// ---------------------------------------------------------------------------
// MaxVar acquisition

struct MaxVarSearchConfig {
  std::size_t starts = 64;
  std::size_t max_iterations = 40;
  double initial_step = 0.25;  // fraction of the prior std per axis
  double min_step = 1e-3;      // fraction of the prior std per axis
};

/// log Var_m[q_m(x₀|θ) p(θ)] with the divisor-M empirical variance; −∞ when
/// the members agree exactly or θ is outside the prior support.
inline double maxvar_log_objective(std::span<const LogDensityFn> members, const Simulator& prior,
                                   std::span<const double> theta) {
  const double lp = prior.prior_log_prob(theta);
  if (!std::isfinite(lp)) return neg_inf;
  Vector l(members.size());
  double c = neg_inf;
  for (std::size_t m = 0; m < members.size(); ++m) {
    l[m] = members[m](theta) + lp;
    c = std::max(c, l[m]);
  }
  if (!std::isfinite(c)) return neg_inf;
  double mean = 0.0;
  for (double& v : l) {
    v = std::exp(v - c);
    mean += v;
  }
  mean /= static_cast<double>(l.size());
  double var = 0.0;
  for (double v : l) var += (v - mean) * (v - mean);
  var /= static_cast<double>(l.size());
  return var > 0.0 ? 2.0 * c + std::log(var) : neg_inf;
}

/// θ* = argmax of the ensemble variance of the unnormalized posterior, by
/// coordinate search from prior-sampled starts.
inline Vector maxvar_acquire(std::span<const LogDensityFn> members, const Simulator& prior,
                             const MaxVarSearchConfig& cfg, RngStream& rng) {
  if (members.size() < 2) throw ConfigError("E_CONFIG_MAXVAR", "MaxVar needs an ensemble of at least 2 models");
  if (cfg.starts < 1) throw ConfigError("E_CONFIG_MAXVAR", "MaxVar needs at least one start");
  const Vector scale = prior.prior_std();
  const std::size_t d = scale.size();
  Vector best;
  double best_val = neg_inf;
  for (std::size_t s = 0; s < cfg.starts; ++s) {
    Vector theta = prior.prior_sample(rng);
    double val = maxvar_log_objective(members, prior, theta);
    Vector step(d);
    for (std::size_t i = 0; i < d; ++i) step[i] = cfg.initial_step * scale[i];
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
      bool any_step = false;
      for (std::size_t i = 0; i < d; ++i) {
        if (step[i] < cfg.min_step * scale[i]) continue;
        any_step = true;
        bool moved = false;
        for (double dir : {1.0, -1.0}) {
          Vector cand = theta;
          cand[i] += dir * step[i];
          const double v = maxvar_log_objective(members, prior, cand);
          if (v > val) {
            theta = std::move(cand);
            val = v;
            moved = true;
            break;
          }
        }
        if (!moved) step[i] *= 0.5;
      }
      if (!any_step) break;
    }
    if (best.empty() || val > best_val) {
      best = std::move(theta);
      best_val = val;
    }
  }
  if (!std::isfinite(best_val))
    throw DegenerateAcquisitionError("ensemble variance is zero everywhere the search looked");
  return best;
}

// ---------------------------------------------------------------------------
// Shared plumbing for the sequential algorithms

/// Per-axis affine map z = (v − shift) / scale fixed from round-1 data.
struct AffineNormalizer {
  Vector shift;
  Vector scale;

  static AffineNormalizer identity(std::size_t d) { return {Vector(d, 0.0), Vector(d, 1.0)}; }
  static AffineNormalizer fit(const Matrix& data) {
    AffineNormalizer n{column_mean(data), Vector(data.cols(), 1.0)};
    for (std::size_t j = 0; j < data.cols(); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < data.rows(); ++r) s += (data(r, j) - n.shift[j]) * (data(r, j) - n.shift[j]);
      s = std::sqrt(s / static_cast<double>(std::max<std::size_t>(data.rows(), 2) - 1));
      n.scale[j] = (s > 0.0 && std::isfinite(s)) ? s : 1.0;
    }
    return n;
  }

  Vector apply(std::span<const double> v) const {
    Vector z(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) z[j] = (v[j] - shift[j]) / scale[j];
    return z;
  }
  Vector invert(std::span<const double> z) const {
    Vector v(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) v[j] = shift[j] + scale[j] * z[j];
    return v;
  }
  Matrix apply(const Matrix& m) const {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t j = 0; j < m.cols(); ++j) out(r, j) = (m(r, j) - shift[j]) / scale[j];
    return out;
  }
  Matrix invert(const Matrix& m) const {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t j = 0; j < m.cols(); ++j) out(r, j) = shift[j] + scale[j] * m(r, j);
    return out;
  }
  GaussianDensity apply(const GaussianDensity& g) const {
    Matrix cov = g.covariance();
    for (std::size_t i = 0; i < cov.rows(); ++i)
      for (std::size_t j = 0; j < cov.cols(); ++j) cov(i, j) /= scale[i] * scale[j];
    return GaussianDensity(apply(g.mean()), std::move(cov));
  }
  GaussianDensity invert(const GaussianDensity& g) const {
    Matrix cov = g.covariance();
    for (std::size_t i = 0; i < cov.rows(); ++i)
      for (std::size_t j = 0; j < cov.cols(); ++j) cov(i, j) *= scale[i] * scale[j];
    return GaussianDensity(invert(g.mean()), std::move(cov));
  }
  GaussianMixture invert(const GaussianMixture& q) const {
    std::vector<GaussianDensity> comps;
    for (const auto& c : q.components()) comps.push_back(invert(c));
    return GaussianMixture(q.weights(), std::move(comps));
  }
  /// log |dz/dv|; converts densities over z into densities over v.
  double log_jacobian() const {
    double s = 0.0;
    for (double v : scale) s -= std::log(v);
    return s;
  }
};

namespace detail {

using Clock = std::chrono::steady_clock;
inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Simulates every row of `thetas`; row i uses RngStream(base, i).
inline Matrix simulate_batch(const Simulator& sim, const Matrix& thetas, RngStream& rng) {
  const std::uint64_t base = rng.next_u64();
  Matrix xs(thetas.rows(), sim.data_dim());
  parallel_for(0, thetas.rows(), [&](std::size_t i) {
    RngStream r(base, i);
    const Vector x = sim.simulate(thetas.row(i), r);
    std::copy(x.begin(), x.end(), xs.row(i).begin());
  });
  if (!xs.all_finite()) throw NumericError("simulator returned non-finite summaries");
  return xs;
}

/// n draws from `draw`, redrawing those outside the prior support.
template <class Draw>
Matrix draw_in_support(const Simulator& sim, std::size_t n, Draw&& draw, RngStream& rng,
                       std::size_t max_attempts_per_sample = 1000) {
  Matrix out;
  std::size_t attempts = 0;
  while (out.rows() < n) {
    Vector t = draw(rng);
    if (sim.in_support(t)) out.append_row(t);
    else if (++attempts > max_attempts_per_sample * n)
      throw DegeneratePopulationError("proposal almost never lands inside the prior support");
  }
  return out;
}

inline Matrix prior_draws(const Simulator& sim, std::size_t n, RngStream& rng) {
  Matrix out(n, sim.param_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const Vector t = sim.prior_sample(rng);
    std::copy(t.begin(), t.end(), out.row(i).begin());
  }
  return out;
}

inline void finish_trace(RoundTrace& t, const Matrix& samples, const std::optional<Vector>& theta_true) {
  summarize_samples(samples, {}, t);
  if (theta_true && samples.rows() >= 10) {
    try {
      t.neg_log_true_params = neg_log_true_params(samples, *theta_true);
    } catch (const DegenerateDataError&) {
      t.neg_log_true_params = std::numeric_limits<double>::infinity();
    }
  }
}

inline void check_rounds(std::size_t rounds, std::size_t sims) {
  if (rounds < 1) throw ConfigError("E_CONFIG_ALGORITHM", "at least one round is required");
  if (sims < 2) throw ConfigError("E_CONFIG_ALGORITHM", "at least two simulations per round are required");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SNPE-A and SNPE-B

struct SnpeConfig {
  std::size_t rounds = 2;
  std::size_t simulations_per_round = 1000;
  std::size_t components = 8;
  std::vector<std::size_t> trunk{50, 50};
  TrainConfig train{};
  /// Epoch cap for rounds after the first (warm-started); unset = train.max_epochs.
  std::optional<std::size_t> refine_epochs;
  /// SNPE-A: later-round proposal covariance = this × moment-matched covariance.
  double proposal_variance_scale = 1.0;
  std::size_t posterior_samples = 1000;
  bool normalize = true;
  std::optional<Vector> theta_true;
};

struct SnpeAResult {
  CorrectedMixture posterior;
  MdnModel model;  // over normalized θ given normalized x
  AffineNormalizer theta_normalizer;
  AffineNormalizer x_normalizer;
  std::vector<RoundTrace> rounds;
  Matrix samples;
  bool terminated_early = false;
  std::string termination_reason;
};

struct SnpeBResult {
  GaussianMixture posterior;
  MdnModel model;
  AffineNormalizer theta_normalizer;
  AffineNormalizer x_normalizer;
  std::vector<RoundTrace> rounds;
  Matrix samples;
};

namespace detail {

inline Matrix posterior_samples(const Simulator& sim, const GaussianMixture& q, std::size_t n, RngStream& rng) {
  return draw_in_support(sim, n, [&](RngStream& r) { return q.sample(r); }, rng);
}

struct SnpeState {
  AffineNormalizer tn, xn;
  MdnModel model;
  bool fitted = false;
};

inline TrainTrace snpe_train(SnpeState& st, const SnpeConfig& cfg, const Matrix& thetas, const Matrix& xs,
                             std::span<const double> weights, std::size_t round, RngStream& rng) {
  if (!st.fitted) {
    st.tn = cfg.normalize ? AffineNormalizer::fit(thetas) : AffineNormalizer::identity(thetas.cols());
    st.xn = cfg.normalize ? AffineNormalizer::fit(xs) : AffineNormalizer::identity(xs.cols());
    RngStream init = rng.split(0);
    st.model = MdnModel(xs.cols(), thetas.cols(), cfg.trunk, cfg.components, init);
    st.fitted = true;
  }
  TrainConfig tc = cfg.train;
  if (round > 1 && cfg.refine_epochs) tc.max_epochs = *cfg.refine_epochs;
  Dataset data{st.tn.apply(thetas), st.xn.apply(xs)};
  auto res = train_mle(std::move(st.model), data, weights, tc, rng);
  st.model = std::move(res.model);
  return res.trace;
}

inline void record_training(RoundTrace& t, const TrainTrace& tr) {
  t.diagnostics["epochs"] = static_cast<double>(tr.epochs_run);
  t.diagnostics["best_epoch"] = static_cast<double>(tr.best_epoch);
  if (!tr.validation_loss.empty() && tr.best_epoch > 0)
    t.diagnostics["best_validation_loss"] = tr.validation_loss[tr.best_epoch - 1];
}

}  // namespace detail

/// SNPE-A. Round 1 simulates from the prior; later rounds from the previous
/// corrected posterior collapsed to a Gaussian. A failed correction ends the
/// run early and returns the previous round's estimate.
inline SnpeAResult snpe_a_run(const Simulator& sim, std::span<const double> x0, const SnpeConfig& cfg,
                              RngStream& rng) {
  detail::check_rounds(cfg.rounds, cfg.simulations_per_round);
  if (x0.size() != sim.data_dim()) throw ShapeError("snpe_a_run: observation has wrong dimension");
  const std::optional<GaussianDensity> prior = sim.gaussian_prior();
  if (!prior && !sim.prior_is_uniform())
    throw ConfigError("E_CONFIG_ALGORITHM", "SNPE-A requires a Gaussian or uniform prior");
  if (!(cfg.proposal_variance_scale > 0.0))
    throw ConfigError("E_CONFIG_ALGORITHM", "proposal variance scale must be positive");

  SnpeAResult res;
  detail::SnpeState st;
  std::optional<GaussianDensity> proposal;  // θ-space; nullopt = prior
  std::size_t cumulative = 0;
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const auto t0 = detail::Clock::now();
    RoundTrace trace;
    trace.round = r;
    Matrix thetas = proposal ? detail::draw_in_support(sim, cfg.simulations_per_round,
                                                       [&](RngStream& g) { return proposal->sample(g); }, rng)
                             : detail::prior_draws(sim, cfg.simulations_per_round, rng);
    trace.proposal = proposal ? "gaussian" : "prior";
    const Matrix xs = detail::simulate_batch(sim, thetas, rng);
    cumulative += thetas.rows();
    trace.n_simulations = thetas.rows();
    trace.cumulative_simulations = cumulative;
    detail::record_training(trace, detail::snpe_train(st, cfg, thetas, xs, {}, r, rng));

    const GaussianMixture q = mdn_conditional(st.model, st.xn.apply(x0));
    GaussianMixture post_z;
    try {
      if (!proposal) {
        post_z = prior ? snpea_correct(q, st.tn.apply(*prior), st.tn.apply(*prior)) : q;
      } else {
        post_z = snpea_correct(q, st.tn.apply(*proposal),
                               prior ? std::optional<GaussianDensity>(st.tn.apply(*prior)) : std::nullopt);
      }
    } catch (const NonPositiveDefinite& e) {
      res.terminated_early = true;
      res.termination_reason = std::string("round ") + std::to_string(r) + ": " + e.what();
      trace.diagnostics["correction_failed"] = 1.0;
      trace.posterior_mean = res.rounds.back().posterior_mean;
      trace.posterior_covariance = res.rounds.back().posterior_covariance;
      trace.neg_log_true_params = res.rounds.back().neg_log_true_params;
      trace.wall_clock_seconds = detail::seconds_since(t0);
      res.rounds.push_back(std::move(trace));
      break;
    }
    res.posterior = st.tn.invert(post_z);
    res.samples = detail::posterior_samples(sim, res.posterior, cfg.posterior_samples, rng);
    detail::finish_trace(trace, res.samples, cfg.theta_true);
    trace.diagnostics["correction_failed"] = 0.0;
    trace.wall_clock_seconds = detail::seconds_since(t0);
    res.rounds.push_back(std::move(trace));
    if (r < cfg.rounds) {
      const GaussianDensity mm = res.posterior.moment_matched();
      Matrix cov = mm.covariance();
      for (double& v : cov.data()) v *= cfg.proposal_variance_scale;
      proposal = GaussianDensity(mm.mean(), std::move(cov));
    }
  }
  res.model = std::move(st.model);
  res.theta_normalizer = st.tn;
  res.x_normalizer = st.xn;
  return res;
}

/// SNPE-B. Later rounds simulate from the previous round's q(θ|x₀) and train
/// on importance weights p(θ)/p̃(θ) normalized to mean 1.
inline SnpeBResult snpe_b_run(const Simulator& sim, std::span<const double> x0, const SnpeConfig& cfg,
                              RngStream& rng) {
  detail::check_rounds(cfg.rounds, cfg.simulations_per_round);
  if (x0.size() != sim.data_dim()) throw ShapeError("snpe_b_run: observation has wrong dimension");
  SnpeBResult res;
  detail::SnpeState st;
  std::optional<GaussianMixture> proposal;
  std::size_t cumulative = 0;
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const auto t0 = detail::Clock::now();
    RoundTrace trace;
    trace.round = r;
    const std::size_t m = cfg.simulations_per_round;
    Matrix thetas = proposal ? detail::posterior_samples(sim, *proposal, m, rng) : detail::prior_draws(sim, m, rng);
    trace.proposal = proposal ? "mixture" : "prior";
    Vector w(m, 1.0);
    if (proposal) {
      Vector logw(m);
      for (std::size_t i = 0; i < m; ++i)
        logw[i] = sim.prior_log_prob(thetas.row(i)) - proposal->log_prob(thetas.row(i));
      const double lse = log_sum_exp(logw);
      if (!std::isfinite(lse))
        throw RoundError("E_DEGENERATE_WEIGHTS", "importance weights are degenerate in round " + std::to_string(r),
                         res.rounds);
      for (std::size_t i = 0; i < m; ++i) w[i] = std::exp(logw[i] - lse) * static_cast<double>(m);
    }
    double var = 0.0;
    for (double v : w) var += (v - 1.0) * (v - 1.0);
    trace.diagnostics["weight_variance"] = var / static_cast<double>(m);
    Vector sorted = w;
    std::sort(sorted.begin(), sorted.end());
    const double med = sorted_quantile(sorted, 0.5);
    trace.diagnostics["weight_max_median_ratio"] = med > 0.0 ? sorted.back() / med : std::numeric_limits<double>::infinity();

    const Matrix xs = detail::simulate_batch(sim, thetas, rng);
    cumulative += m;
    trace.n_simulations = m;
    trace.cumulative_simulations = cumulative;
    try {
      detail::record_training(trace, detail::snpe_train(st, cfg, thetas, xs, w, r, rng));
    } catch (const DegenerateDataError& e) {
      throw RoundError("E_DEGENERATE_WEIGHTS", e.what(), res.rounds);
    }
    res.posterior = st.tn.invert(mdn_conditional(st.model, st.xn.apply(x0)));
    res.samples = detail::posterior_samples(sim, res.posterior, cfg.posterior_samples, rng);
    detail::finish_trace(trace, res.samples, cfg.theta_true);
    trace.wall_clock_seconds = detail::seconds_since(t0);
    res.rounds.push_back(std::move(trace));
    proposal = res.posterior;
  }
  res.model = std::move(st.model);
  res.theta_normalizer = st.tn;
  res.x_normalizer = st.xn;
  return res;
}

// ---------------------------------------------------------------------------
// SNL and MaxVar-SNL

struct SnlConfig {
  std::size_t rounds = 3;
  std::size_t simulations_per_round = 334;
  std::size_t flow_layers = 5;
  std::vector<std::size_t> hidden{50};
  TrainConfig train{};
  std::size_t burn_in = 200;
  std::size_t thin = 10;
  std::size_t posterior_samples = 1000;
  bool normalize = true;
  bool compute_mmd = true;
  std::optional<Vector> theta_true;
  // MaxVar variant
  std::size_t ensemble_size = 5;
  MaxVarSearchConfig search{};
};

struct SnlResult {
  std::vector<MafModel> models;  // one for SNL, the ensemble for MaxVar
  AffineNormalizer theta_normalizer;
  AffineNormalizer x_normalizer;
  Dataset data;  // cumulative (θ, x) pairs, unnormalized: targets = x, context = θ
  std::vector<RoundTrace> rounds;
  Matrix samples;
  LogDensityFn log_posterior;  // unnormalized log p̂(θ | x₀)
};

namespace detail {

// log q(x₀|θ) averaged (in density) over the ensemble, plus the prior.
inline LogDensityFn snl_log_posterior(const Simulator& sim, std::shared_ptr<const std::vector<MafModel>> models,
                                      AffineNormalizer tn, Vector x0n) {
  return [&sim, models, tn = std::move(tn), x0n = std::move(x0n)](std::span<const double> theta) {
    const double lp = sim.prior_log_prob(theta);
    if (!std::isfinite(lp)) return neg_inf;
    const Vector z = tn.apply(theta);
    if (models->size() == 1) return lp + maf_log_prob(models->front(), x0n, z);
    Vector l(models->size());
    for (std::size_t m = 0; m < models->size(); ++m) l[m] = maf_log_prob((*models)[m], x0n, z);
    return lp + log_sum_exp(l) - std::log(static_cast<double>(models->size()));
  };
}

inline Vector best_start(const LogDensityFn& f, const Matrix& candidates) {
  Vector best;
  double bv = neg_inf;
  for (std::size_t i = 0; i < candidates.rows(); ++i) {
    const double v = f(candidates.row(i));
    if (v > bv) {
      bv = v;
      best = candidates.row_copy(i);
    }
  }
  if (best.empty()) throw InitializationError("no training parameter has finite posterior density");
  return best;
}

inline std::optional<double> mmd_diagnostic(const MafModel& model, const AffineNormalizer& tn,
                                            const AffineNormalizer& xn, const Matrix& thetas, const Matrix& xs,
                                            RngStream& rng) {
  Matrix model_x(thetas.rows(), xs.cols());
  for (std::size_t i = 0; i < thetas.rows(); ++i) {
    const Matrix s = maf_sample(model, 1, tn.apply(thetas.row(i)), rng);
    std::copy(s.row(0).begin(), s.row(0).end(), model_x.row(i).begin());
  }
  try {
    return mmd_statistic(xn.apply(xs), model_x);
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline SnlResult snl_driver(const Simulator& sim, std::span<const double> x0, const SnlConfig& cfg, RngStream& rng,
                            bool maxvar) {
  check_rounds(cfg.rounds, cfg.simulations_per_round);
  if (x0.size() != sim.data_dim()) throw ShapeError("snl_run: observation has wrong dimension");
  if (maxvar && cfg.ensemble_size < 2)
    throw ConfigError("E_CONFIG_MAXVAR", "MaxVar needs an ensemble of at least 2 models");
  const std::size_t n_models = maxvar ? cfg.ensemble_size : 1;
  SnlResult res;
  res.data.targets = Matrix(0, sim.data_dim());
  res.data.context = Matrix(0, sim.param_dim());
  auto models = std::make_shared<std::vector<MafModel>>();
  const Vector widths = sim.prior_std();
  SliceConfig slice{cfg.burn_in, cfg.thin};
  Matrix next;  // proposals for the coming round
  std::optional<Vector> chain_state;
  std::size_t cumulative = 0;

  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const auto t0 = Clock::now();
    RoundTrace trace;
    trace.round = r;
    const Matrix thetas = r == 1 ? prior_draws(sim, cfg.simulations_per_round, rng) : next;
    trace.proposal = r == 1 ? "prior" : (maxvar ? "maxvar" : "mcmc");
    const Matrix xs = simulate_batch(sim, thetas, rng);
    cumulative += thetas.rows();
    trace.n_simulations = thetas.rows();
    trace.cumulative_simulations = cumulative;
    res.data.targets = vstack(res.data.targets, xs);
    res.data.context = vstack(res.data.context, thetas);
    if (r == 1) {
      res.theta_normalizer = cfg.normalize ? AffineNormalizer::fit(thetas) : AffineNormalizer::identity(thetas.cols());
      res.x_normalizer = cfg.normalize ? AffineNormalizer::fit(xs) : AffineNormalizer::identity(xs.cols());
      for (std::size_t m = 0; m < n_models; ++m) {
        RngStream init = rng.split(m);
        models->emplace_back(sim.data_dim(), sim.param_dim(), cfg.flow_layers, cfg.hidden, init);
      }
    }
    const Dataset train{res.x_normalizer.apply(res.data.targets), res.theta_normalizer.apply(res.data.context)};
    for (std::size_t m = 0; m < n_models; ++m) {
      auto tr = train_mle(std::move((*models)[m]), train, {}, cfg.train, rng);
      (*models)[m] = std::move(tr.model);
      if (m == 0) record_training(trace, tr.trace);
    }
    if (cfg.compute_mmd)
      trace.mmd = mmd_diagnostic(models->front(), res.theta_normalizer, res.x_normalizer, thetas, xs, rng);

    const LogDensityFn log_post = snl_log_posterior(sim, models, res.theta_normalizer, res.x_normalizer.apply(x0));
    if (!chain_state || !std::isfinite(log_post(*chain_state))) chain_state = best_start(log_post, res.data.context);
    const bool last = r == cfg.rounds;
    const std::size_t n_draw = last ? cfg.posterior_samples : cfg.simulations_per_round;
    SliceChain chain;
    try {
      chain = slice_sample_axis(log_post, *chain_state, n_draw, widths, rng, slice);
    } catch (const Error& e) {
      throw RoundError("E_MCMC", std::string("round ") + std::to_string(r) + ": " + e.what(), res.rounds);
    }
    chain_state = chain.last;
    trace.diagnostics["mcmc_evaluations"] = static_cast<double>(chain.evaluations);
    finish_trace(trace, chain.samples, cfg.theta_true);
    if (last) {
      res.samples = std::move(chain.samples);
    } else if (maxvar) {
      std::vector<LogDensityFn> members;
      for (std::size_t m = 0; m < n_models; ++m)
        members.push_back([models, m, tn = res.theta_normalizer, x0n = res.x_normalizer.apply(x0)](
                              std::span<const double> theta) { return maf_log_prob((*models)[m], x0n, tn.apply(theta)); });
      next = Matrix(0, sim.param_dim());
      for (std::size_t i = 0; i < cfg.simulations_per_round; ++i) next.append_row(maxvar_acquire(members, sim, cfg.search, rng));
    } else {
      next = std::move(chain.samples);
    }
    trace.wall_clock_seconds = seconds_since(t0);
    res.rounds.push_back(std::move(trace));
  }
  res.models = std::move(*models);
  auto final_models = std::make_shared<const std::vector<MafModel>>(res.models);
  res.log_posterior = snl_log_posterior(sim, final_models, res.theta_normalizer, res.x_normalizer.apply(x0));
  return res;
}

}  // namespace detail

/// SNL: a conditional MAF q(x|θ) retrained each round on all simulations so
/// far; the next round's parameters are slice-sampler draws from q(x₀|θ)p(θ).
inline SnlResult snl_run(const Simulator& sim, std::span<const double> x0, const SnlConfig& cfg, RngStream& rng) {
  return detail::snl_driver(sim, x0, cfg, rng, false);
}

/// SNL whose later-round parameters are chosen one by one with the MaxVar
/// rule over an ensemble of independently initialized flows.
inline SnlResult maxvar_snl_run(const Simulator& sim, std::span<const double> x0, const SnlConfig& cfg,
                                RngStream& rng) {
  return detail::snl_driver(sim, x0, cfg, rng, true);
}

}  // namespace lfi
