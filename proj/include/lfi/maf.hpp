#pragma once

// Masked Autoregressive Flow: a stack of MADEs with permutations in between.
// Density evaluation is one pass per layer; sampling inverts the stack and
// costs D sequential passes per layer.

#include <span>
#include <utility>
#include <vector>

#include "lfi/made.hpp"

namespace lfi {

using Permutation = std::vector<std::size_t>;

inline Permutation reversed_permutation(std::size_t dim) {
  Permutation p(dim);
  for (std::size_t k = 0; k < dim; ++k) p[k] = dim - 1 - k;
  return p;
}

class MafModel {
 public:
  MafModel() = default;

  /// `n_layers` MADEs in natural order; with `reverse_between` a reversal
  /// permutation sits between consecutive layers, otherwise the identity.
  MafModel(std::size_t dim, std::size_t context_dim, std::size_t n_layers, std::vector<std::size_t> hidden,
           RngStream& rng, Activation act = Activation::tanh, bool reverse_between = true) {
    if (n_layers < 1) throw ShapeError("MAF needs at least one layer");
    for (std::size_t l = 0; l < n_layers; ++l) {
      RngStream layer_rng = rng.split(l);
      layers_.emplace_back(dim, context_dim, hidden, natural_order(dim), layer_rng, act);
      if (l + 1 < n_layers) permutations_.push_back(reverse_between ? reversed_permutation(dim) : natural_order(dim));
    }
  }

  MafModel(std::vector<MadeNet> layers, std::vector<Permutation> perms)
      : layers_(std::move(layers)), permutations_(std::move(perms)) {
    if (layers_.empty()) throw ShapeError("MAF needs at least one layer");
    if (permutations_.size() + 1 != layers_.size())
      throw ShapeError("MAF needs one permutation between each pair of layers");
    for (const auto& l : layers_)
      if (l.dim() != layers_.front().dim() || l.context_dim() != layers_.front().context_dim())
        throw ShapeError("MAF layers disagree on dimensions");
    for (const auto& p : permutations_) (void)detail::degrees_from_order(dim(), p);
  }

  std::size_t dim() const noexcept { return layers_.front().dim(); }
  std::size_t context_dim() const noexcept { return layers_.front().context_dim(); }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::vector<MadeNet>& layers() noexcept { return layers_; }
  const std::vector<MadeNet>& layers() const noexcept { return layers_; }
  const std::vector<Permutation>& permutations() const noexcept { return permutations_; }

  void set_log_scale_clip(double c) {
    for (auto& l : layers_) l.set_log_scale_clip(c);
  }
  void zero_parameters() {
    for (auto& l : layers_) l.zero_parameters();
  }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.num_params();
    return n;
  }
  Vector params() const {
    Vector p;
    p.reserve(num_params());
    for (const auto& l : layers_) {
      Vector lp = l.params();
      p.insert(p.end(), lp.begin(), lp.end());
    }
    return p;
  }
  void set_params(std::span<const double> p) {
    std::size_t off = 0;
    for (auto& l : layers_) off = l.set_params(p, off);
    if (off != p.size()) throw ShapeError("MAF parameter vector has wrong length");
  }

  struct ForwardResult {
    std::vector<MadeForwardCache> caches;
    Matrix u;       // final base-space values
    Vector log_det; // summed over layers, per row
  };

  ForwardResult forward(const Matrix& x, const Matrix& context) const {
    ForwardResult res;
    res.log_det.assign(x.rows(), 0.0);
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      MadeForwardCache c;
      try {
        c = layers_[l].forward(h, context);
      } catch (const NumericError& e) {
        throw NumericError("MAF layer " + std::to_string(l) + ": " + e.what(), l);
      }
      for (std::size_t r = 0; r < x.rows(); ++r) res.log_det[r] += c.log_det[r];
      if (l + 1 < layers_.size()) h = permute_columns(c.u, permutations_[l]);
      else h = c.u;
      res.caches.push_back(std::move(c));
    }
    res.u = std::move(h);
    return res;
  }

  Matrix inverse(const Matrix& u, const Matrix& context) const {
    Matrix h = u;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      Matrix x = layers_[l].inverse(h, context);
      h = l > 0 ? unpermute_columns(x, permutations_[l - 1]) : std::move(x);
    }
    return h;
  }

  /// Gradient of loss L given dL/du_final and dL/d(total log_det) per row.
  void backward(const ForwardResult& f, Matrix grad_u, std::span<const double> grad_log_det,
                std::span<double> grad) const {
    std::vector<std::size_t> offsets(layers_.size(), 0);
    for (std::size_t l = 1; l < layers_.size(); ++l) offsets[l] = offsets[l - 1] + layers_[l - 1].num_params();
    for (std::size_t l = layers_.size(); l-- > 0;) {
      auto g = grad.subspan(offsets[l], layers_[l].num_params());
      Matrix gx = layers_[l].backward(f.caches[l], grad_u, grad_log_det, g);
      if (l > 0) grad_u = unpermute_columns(gx, permutations_[l - 1]);
    }
  }

  // h'[k] = h[p[k]]
  static Matrix permute_columns(const Matrix& m, const Permutation& p) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t k = 0; k < p.size(); ++k) out(r, k) = m(r, p[k]);
    return out;
  }
  static Matrix unpermute_columns(const Matrix& m, const Permutation& p) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t k = 0; k < p.size(); ++k) out(r, p[k]) = m(r, k);
    return out;
  }

 private:
  std::vector<MadeNet> layers_;
  std::vector<Permutation> permutations_;
};

inline Vector maf_log_prob_batch(const MafModel& model, const Matrix& x, const Matrix& context) {
  const auto f = model.forward(x, context);
  Vector lp(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = f.log_det[r];
    for (std::size_t d = 0; d < model.dim(); ++d) s += std_normal_log_pdf(f.u(r, d));
    lp[r] = s;
  }
  return lp;
}

inline double maf_log_prob(const MafModel& model, std::span<const double> x, std::span<const double> context = {}) {
  if (x.size() != model.dim() || context.size() != model.context_dim())
    throw ShapeError("maf_log_prob: dimension mismatch");
  return maf_log_prob_batch(model, Matrix::row_vector(x), broadcast_context(context, 1))[0];
}

/// Base-space image u of x (the density direction of the whole stack).
inline Vector maf_to_base(const MafModel& model, std::span<const double> x, std::span<const double> context = {}) {
  return model.forward(Matrix::row_vector(x), broadcast_context(context, 1)).u.row_copy(0);
}

inline Matrix maf_sample(const MafModel& model, std::size_t n, std::span<const double> context, RngStream& rng) {
  if (context.size() != model.context_dim()) throw ShapeError("maf_sample: context dimension mismatch");
  Matrix u(n, model.dim());
  for (double& v : u.data()) v = rng.normal();
  return model.inverse(u, broadcast_context(context, n));
}

// ---------------------------------------------------------------------------
// Uniform training interface: weighted negative average log likelihood
// L = −(1/N) Σ wₙ log q(targetₙ | contextₙ) and its parameter gradient.

inline Vector log_prob_batch(const MadeNet& m, const Matrix& t, const Matrix& c) { return made_log_prob_batch(m, t, c); }
inline Vector log_prob_batch(const MafModel& m, const Matrix& t, const Matrix& c) { return maf_log_prob_batch(m, t, c); }

inline std::pair<double, Vector> loss_and_grad(const MadeNet& m, const Matrix& t, const Matrix& c,
                                               std::span<const double> weights) {
  const std::size_t n = t.rows();
  const MadeForwardCache f = m.forward(t, c);
  Vector grad(m.num_params(), 0.0);
  Matrix gu(n, m.dim());
  Vector gld(n);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double w = weights.empty() ? 1.0 : weights[r];
    double lp = f.log_det[r];
    for (std::size_t d = 0; d < m.dim(); ++d) {
      lp += std_normal_log_pdf(f.u(r, d));
      gu(r, d) = w * inv_n * f.u(r, d);
    }
    gld[r] = -w * inv_n;
    loss -= w * inv_n * lp;
  }
  m.backward(f, gu, gld, grad);
  return {loss, std::move(grad)};
}

inline std::pair<double, Vector> loss_and_grad(const MafModel& m, const Matrix& t, const Matrix& c,
                                               std::span<const double> weights) {
  const std::size_t n = t.rows();
  const auto f = m.forward(t, c);
  Vector grad(m.num_params(), 0.0);
  Matrix gu(n, m.dim());
  Vector gld(n);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double w = weights.empty() ? 1.0 : weights[r];
    double lp = f.log_det[r];
    for (std::size_t d = 0; d < m.dim(); ++d) {
      lp += std_normal_log_pdf(f.u(r, d));
      gu(r, d) = w * inv_n * f.u(r, d);
    }
    gld[r] = -w * inv_n;
    loss -= w * inv_n * lp;
  }
  m.backward(f, std::move(gu), gld, grad);
  return {loss, std::move(grad)};
}

}  // namespace lfi
