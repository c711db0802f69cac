#pragma once

// Conditional Gaussian mixture-density network with full covariances
// S_k = L_k L_kᵀ (L_k lower-triangular with log-parameterized diagonal), and
// the analytic proposal correction used by SNPE-A.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfi/gaussian.hpp"
#include "lfi/layers.hpp"
#include "lfi/math_util.hpp"
#include "lfi/training.hpp"

namespace lfi {

/// Finite mixture of full-covariance Gaussians. The constructor rejects
/// non-normalized weights and non-positive-definite covariances.
class GaussianMixture {
 public:
  GaussianMixture() = default;
  GaussianMixture(Vector weights, std::vector<GaussianDensity> components)
      : weights_(std::move(weights)), components_(std::move(components)) {
    if (weights_.size() != components_.size() || weights_.empty())
      throw ShapeError("GaussianMixture: need one weight per component");
    double s = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw NumericError("GaussianMixture: negative or NaN weight");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw NumericError("GaussianMixture: weights do not sum to 1");
    log_weights_.resize(weights_.size());
    for (std::size_t k = 0; k < weights_.size(); ++k) log_weights_[k] = std::log(weights_[k]);
    for (const auto& c : components_)
      if (c.dim() != components_.front().dim()) throw ShapeError("GaussianMixture: dimension mismatch");
  }
  GaussianMixture(Vector weights, std::vector<Vector> means, std::vector<Matrix> covs)
      : GaussianMixture(std::move(weights), make_components(std::move(means), std::move(covs))) {}

  std::size_t dim() const noexcept { return components_.front().dim(); }
  std::size_t size() const noexcept { return components_.size(); }
  const Vector& weights() const noexcept { return weights_; }
  const std::vector<GaussianDensity>& components() const noexcept { return components_; }

  double log_prob(std::span<const double> x) const {
    Vector t(size());
    for (std::size_t k = 0; k < size(); ++k) t[k] = log_weights_[k] + components_[k].log_prob(x);
    return log_sum_exp(t);
  }

  Vector sample(RngStream& rng) const { return components_[rng.categorical(weights_)].sample(rng); }
  Matrix sample(std::size_t n, RngStream& rng) const {
    Matrix out(n, dim());
    for (std::size_t i = 0; i < n; ++i) {
      Vector s = sample(rng);
      std::copy(s.begin(), s.end(), out.row(i).begin());
    }
    return out;
  }

  Vector mean() const {
    Vector m(dim(), 0.0);
    for (std::size_t k = 0; k < size(); ++k)
      for (std::size_t d = 0; d < dim(); ++d) m[d] += weights_[k] * components_[k].mean()[d];
    return m;
  }

  /// Full mixture covariance Σ_k w_k (S_k + m_k m_kᵀ) − m mᵀ.
  Matrix covariance() const {
    const Vector m = mean();
    const std::size_t d = dim();
    Matrix c(d, d);
    for (std::size_t k = 0; k < size(); ++k) {
      const auto& comp = components_[k];
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          c(i, j) += weights_[k] * (comp.covariance()(i, j) + (comp.mean()[i] - m[i]) * (comp.mean()[j] - m[j]));
    }
    return c;
  }

  /// Single Gaussian with the mixture's mean and covariance.
  GaussianDensity moment_matched() const { return GaussianDensity(mean(), covariance()); }

 private:
  static std::vector<GaussianDensity> make_components(std::vector<Vector> means, std::vector<Matrix> covs) {
    if (means.size() != covs.size()) throw ShapeError("GaussianMixture: means/covariances count mismatch");
    std::vector<GaussianDensity> c;
    for (std::size_t k = 0; k < means.size(); ++k) c.emplace_back(std::move(means[k]), std::move(covs[k]));
    return c;
  }

  Vector weights_;
  Vector log_weights_;
  std::vector<GaussianDensity> components_;
};

using CorrectedMixture = GaussianMixture;

// ---------------------------------------------------------------------------

struct MdnForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preacts;
  std::vector<Matrix> outputs;
};

class MdnModel {
 public:
  MdnModel() = default;

  /// `context_dim` conditioning inputs (x), `target_dim` modelled variables (θ).
  MdnModel(std::size_t context_dim, std::size_t target_dim, std::vector<std::size_t> trunk,
           std::size_t components, RngStream& rng)
      : context_dim_(context_dim), target_dim_(target_dim), trunk_(std::move(trunk)), k_(components) {
    if (target_dim_ < 1 || k_ < 1) throw ShapeError("MDN needs target dimension and components >= 1");
    std::size_t in = context_dim_;
    for (std::size_t h : trunk_) {
      layers_.emplace_back(in, h, Activation::tanh);
      layers_.back().init_uniform(rng);
      in = h;
    }
    layers_.emplace_back(in, head_width(), Activation::identity);
    MaskedLayer& head = layers_.back();
    head.init_uniform(rng);
    // distinct component means from the start, unit covariances, equal weights
    for (std::size_t k = 0; k < k_; ++k)
      for (std::size_t d = 0; d < target_dim_; ++d) head.bias[mean_offset(k) + d] = k_ > 1 ? rng.normal() : 0.0;
  }

  std::size_t context_dim() const noexcept { return context_dim_; }
  std::size_t target_dim() const noexcept { return target_dim_; }
  std::size_t components() const noexcept { return k_; }
  const std::vector<std::size_t>& trunk() const noexcept { return trunk_; }
  std::vector<MaskedLayer>& layers() noexcept { return layers_; }
  const std::vector<MaskedLayer>& layers() const noexcept { return layers_; }

  std::size_t tri_size() const noexcept { return target_dim_ * (target_dim_ + 1) / 2; }
  std::size_t head_width() const noexcept { return k_ * (1 + target_dim_ + tri_size()); }
  std::size_t logit_offset(std::size_t k) const noexcept { return k; }
  std::size_t mean_offset(std::size_t k) const noexcept { return k_ + k * target_dim_; }
  std::size_t chol_offset(std::size_t k) const noexcept { return k_ * (1 + target_dim_) + k * tri_size(); }
  // position of L(i, j), i >= j, inside a component's triangle block
  static std::size_t tri_index(std::size_t i, std::size_t j) noexcept { return i * (i + 1) / 2 + j; }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.num_params();
    return n;
  }
  Vector params() const {
    Vector p;
    p.reserve(num_params());
    for (const auto& l : layers_) append_params(l, p);
    return p;
  }
  void set_params(std::span<const double> p) {
    std::size_t off = 0;
    for (auto& l : layers_) off = load_params(l, p, off);
    if (off != p.size()) throw ShapeError("MDN parameter vector has wrong length");
  }

  MdnForwardCache forward(const Matrix& x) const {
    if (x.cols() != context_dim_) throw ShapeError("MDN context has wrong dimension");
    MdnForwardCache c;
    Matrix h = x;
    for (const auto& l : layers_) {
      c.inputs.push_back(h);
      c.preacts.emplace_back();
      h = masked_affine_apply(l, h, &c.preacts.back());
      c.outputs.push_back(h);
    }
    if (!c.outputs.back().all_finite()) throw NumericError("MDN trunk produced non-finite output");
    return c;
  }

  /// Mixture over θ given one raw head row.
  GaussianMixture decode(std::span<const double> head) const {
    const std::size_t d = target_dim_;
    Vector logits(head.begin(), head.begin() + static_cast<std::ptrdiff_t>(k_));
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    for (std::size_t k = 0; k < k_; ++k) {
      means.emplace_back(head.begin() + static_cast<std::ptrdiff_t>(mean_offset(k)),
                         head.begin() + static_cast<std::ptrdiff_t>(mean_offset(k) + d));
      const Matrix l = cholesky_factor(head, k);
      Matrix s(d, d);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
          double v = 0.0;
          for (std::size_t m = 0; m <= j; ++m) v += l(i, m) * l(j, m);
          s(i, j) = v;
          s(j, i) = v;
        }
      covs.push_back(std::move(s));
    }
    return GaussianMixture(softmax(logits), std::move(means), std::move(covs));
  }

  Matrix cholesky_factor(std::span<const double> head, std::size_t k) const {
    const std::size_t d = target_dim_;
    Matrix l(d, d);
    const std::size_t base = chol_offset(k);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        const double v = head[base + tri_index(i, j)];
        l(i, j) = i == j ? std::exp(v) : v;
      }
    return l;
  }

  /// Per-component log N(θ; m_k, L_k L_kᵀ) for one head row, plus the
  /// quantities the gradient needs.
  struct ComponentEval {
    double log_density;
    Vector z;      // L⁻¹(θ − m)
    Vector lt_z;   // L⁻ᵀ z
    Matrix l;
  };
  ComponentEval component(std::span<const double> head, std::size_t k, std::span<const double> theta) const {
    const std::size_t d = target_dim_;
    ComponentEval e{0.0, {}, {}, cholesky_factor(head, k)};
    Vector r(d);
    for (std::size_t i = 0; i < d; ++i) r[i] = theta[i] - head[mean_offset(k) + i];
    e.z = linalg::solve_lower(e.l, r);
    e.lt_z = linalg::solve_lower_transpose(e.l, e.z);
    double q = 0.0, logdiag = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      q += e.z[i] * e.z[i];
      logdiag += head[chol_offset(k) + tri_index(i, i)];
    }
    e.log_density = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - logdiag - 0.5 * q;
    return e;
  }

 private:
  std::size_t context_dim_ = 0;
  std::size_t target_dim_ = 0;
  std::vector<std::size_t> trunk_;
  std::size_t k_ = 1;
  std::vector<MaskedLayer> layers_;
};

/// Mixture q(θ | x) produced by the network at context x.
inline GaussianMixture mdn_conditional(const MdnModel& model, std::span<const double> x) {
  const auto c = model.forward(Matrix::row_vector(x));
  return model.decode(c.outputs.back().row(0));
}

inline Vector log_prob_batch(const MdnModel& model, const Matrix& theta, const Matrix& x) {
  if (theta.cols() != model.target_dim()) throw ShapeError("MDN target has wrong dimension");
  const auto c = model.forward(x.cols() == 0 && model.context_dim() == 0 ? Matrix(theta.rows(), 0) : x);
  const Matrix& head = c.outputs.back();
  const std::size_t k = model.components();
  Vector lp(theta.rows());
  Vector t(k);
  for (std::size_t r = 0; r < theta.rows(); ++r) {
    auto h = head.row(r);
    Vector logits(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(k));
    const double lse = log_sum_exp(logits);
    for (std::size_t j = 0; j < k; ++j) t[j] = logits[j] - lse + model.component(h, j, theta.row(r)).log_density;
    lp[r] = log_sum_exp(t);
  }
  return lp;
}

/// log Σ_k w_k(x) N(θ; m_k(x), S_k(x)).
inline double mdn_log_prob(const MdnModel& model, std::span<const double> theta, std::span<const double> x) {
  if (theta.size() != model.target_dim() || x.size() != model.context_dim())
    throw ShapeError("mdn_log_prob: dimension mismatch");
  return log_prob_batch(model, Matrix::row_vector(theta), Matrix::row_vector(x))[0];
}

inline Matrix mdn_sample(const MdnModel& model, std::size_t n, std::span<const double> x, RngStream& rng) {
  return mdn_conditional(model, x).sample(n, rng);
}

inline std::pair<double, Vector> loss_and_grad(const MdnModel& model, const Matrix& theta, const Matrix& x,
                                               std::span<const double> weights) {
  const std::size_t n = theta.rows();
  const std::size_t d = model.target_dim();
  const std::size_t k = model.components();
  const auto c = model.forward(x.cols() == 0 && model.context_dim() == 0 ? Matrix(n, 0) : x);
  const Matrix& head = c.outputs.back();
  Matrix g(n, model.head_width());
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<MdnModel::ComponentEval> evals;
  Vector t(k);
  for (std::size_t r = 0; r < n; ++r) {
    const double w = (weights.empty() ? 1.0 : weights[r]) * inv_n;
    auto h = head.row(r);
    Vector logits(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(k));
    const Vector mix = softmax(logits);
    evals.clear();
    for (std::size_t j = 0; j < k; ++j) {
      evals.push_back(model.component(h, j, theta.row(r)));
      t[j] = std::log(mix[j]) + evals.back().log_density;
    }
    const double lp = log_sum_exp(t);
    loss -= w * lp;
    if (w == 0.0) continue;
    auto gr = g.row(r);
    for (std::size_t j = 0; j < k; ++j) {
      const double resp = std::exp(t[j] - lp);
      gr[model.logit_offset(j)] = w * (mix[j] - resp);
      const double coef = -w * resp;  // dL / d log N_j
      const auto& e = evals[j];
      for (std::size_t i = 0; i < d; ++i) gr[model.mean_offset(j) + i] = coef * e.lt_z[i];
      const std::size_t base = model.chol_offset(j);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t m = 0; m <= i; ++m) {
          const double dl = e.lt_z[i] * e.z[m];
          gr[base + MdnModel::tri_index(i, m)] = i == m ? coef * (dl * e.l(i, i) - 1.0) : coef * dl;
        }
    }
  }
  Vector grad;
  grad.reserve(model.num_params());
  std::vector<LayerGrads> lg;
  for (const auto& l : model.layers()) lg.emplace_back(l);
  Matrix gcur = std::move(g);
  for (std::size_t l = model.layers().size(); l-- > 0;)
    gcur = masked_affine_backward(model.layers()[l], c.inputs[l], c.preacts[l], c.outputs[l], gcur, lg[l]);
  for (const auto& gl : lg) append_grads(gl, grad);
  return {loss, std::move(grad)};
}

// ---------------------------------------------------------------------------
// SNPE-A correction: p̂(θ) ∝ prior(θ) / proposal(θ) · q(θ | x₀).

namespace detail {
// log normalizer of N(m, S) written as exp(logZ − ½θᵀPθ + ηᵀθ):
// logZ = −½ (log det(2πS) + mᵀ S⁻¹ m).
inline double gaussian_log_z(std::span<const double> m, const Matrix& chol_s) {
  const Vector z = linalg::solve_lower(chol_s, m);
  double q = 0.0;
  for (double v : z) q += v * v;
  const double d = static_cast<double>(m.size());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + linalg::log_det_from_cholesky(chol_s) + q);
}
}  // namespace detail

/// Divides each component of `q` by the Gaussian `proposal` and multiplies by
/// the Gaussian `prior` (nullopt: improper uniform prior). Throws
/// NonPositiveDefinite naming the first component whose corrected precision
/// fails a Cholesky factorization.
inline CorrectedMixture snpea_correct(const GaussianMixture& q, const GaussianDensity& proposal,
                                      const std::optional<GaussianDensity>& prior) {
  if (proposal.dim() != q.dim() || (prior && prior->dim() != q.dim()))
    throw ShapeError("snpea_correct: dimension mismatch");
  if (prior && *prior == proposal) return q;
  const std::size_t d = q.dim();
  const Matrix prop_prec = linalg::cholesky_inverse(proposal.cholesky());
  const Vector prop_eta = matvec(prop_prec, proposal.mean());
  const double prop_log_z = detail::gaussian_log_z(proposal.mean(), proposal.cholesky());
  Matrix prior_prec(d, d);
  Vector prior_eta(d, 0.0);
  double prior_log_z = 0.0;
  if (prior) {
    prior_prec = linalg::cholesky_inverse(prior->cholesky());
    prior_eta = matvec(prior_prec, prior->mean());
    prior_log_z = detail::gaussian_log_z(prior->mean(), prior->cholesky());
  }
  Vector log_w(q.size());
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const GaussianDensity& comp = q.components()[k];
    const Matrix comp_prec = linalg::cholesky_inverse(comp.cholesky());
    const Vector comp_eta = matvec(comp_prec, comp.mean());
    Matrix prec = linalg::add(linalg::add(comp_prec, prop_prec, -1.0), prior_prec);
    Vector eta(d);
    for (std::size_t i = 0; i < d; ++i) eta[i] = comp_eta[i] - prop_eta[i] + prior_eta[i];
    auto lp = linalg::cholesky(prec);
    if (!lp)
      throw NonPositiveDefinite("corrected precision of component " + std::to_string(k) +
                                    " is not positive-definite",
                                k);
    Vector mean = linalg::cholesky_solve(*lp, eta);
    Matrix cov = linalg::cholesky_inverse(*lp);
    auto lc = linalg::cholesky(cov);
    if (!lc)
      throw NonPositiveDefinite("corrected covariance of component " + std::to_string(k) +
                                    " is not positive-definite",
                                k);
    log_w[k] = std::log(q.weights()[k]) + detail::gaussian_log_z(comp.mean(), comp.cholesky()) - prop_log_z +
               prior_log_z - detail::gaussian_log_z(mean, *lc);
    means.push_back(std::move(mean));
    covs.push_back(std::move(cov));
  }
  return CorrectedMixture(softmax(log_w), std::move(means), std::move(covs));
}

/// Weighted maximum-likelihood training of q(θ | x). `data.targets` holds θ,
/// `data.context` holds x.
inline TrainResult<MdnModel> train_mdn(MdnModel model, const Dataset& data, std::span<const double> weights,
                                       const TrainConfig& cfg, RngStream& rng) {
  return train_mle(std::move(model), data, weights, cfg, rng);
}

}  // namespace lfi
