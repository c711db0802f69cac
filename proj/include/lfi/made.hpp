#pragma once

// MADE with Gaussian conditionals: a masked feedforward network that maps
// x (and an optional context) to a per-dimension shift and log-scale, giving
// the affine autoregressive transform x_i = exp(α_i) u_i + β_i.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "lfi/gaussian.hpp"
#include "lfi/layers.hpp"

namespace lfi {

/// Unit degrees and binary masks of a MADE. Degrees of the x inputs are their
/// 1-based positions in the autoregressive ordering; context inputs are wired
/// through all-ones mask blocks.
struct MadeMasks {
  std::vector<int> input_degrees;               // length D
  std::vector<std::vector<int>> hidden_degrees;  // one list per hidden layer
  std::vector<Matrix> masks;                    // hidden layers then the output layer
};

namespace detail {

inline std::vector<int> degrees_from_order(std::size_t dim, std::span<const std::size_t> order) {
  if (order.size() != dim) throw ShapeError("MADE order must list every dimension once");
  std::vector<int> deg(dim, 0);
  for (std::size_t k = 0; k < dim; ++k) {
    if (order[k] >= dim || deg[order[k]] != 0) throw ShapeError("MADE order is not a permutation");
    deg[order[k]] = static_cast<int>(k) + 1;
  }
  return deg;
}

// mask(k, j) = 1 iff out_deg[k] >= in_deg[j]; context columns always 1.
inline Matrix hidden_mask(const std::vector<int>& out_deg, const std::vector<int>& in_deg,
                          std::size_t context_cols) {
  Matrix m(out_deg.size(), in_deg.size() + context_cols, 0.0);
  for (std::size_t k = 0; k < out_deg.size(); ++k) {
    for (std::size_t j = 0; j < in_deg.size(); ++j) m(k, j) = out_deg[k] >= in_deg[j] ? 1.0 : 0.0;
    for (std::size_t j = 0; j < context_cols; ++j) m(k, in_deg.size() + j) = 1.0;
  }
  return m;
}

// Output unit for dimension d (shift rows 0..D-1, log-scale rows D..2D-1)
// connects iff in_deg[j] < deg(d).
inline Matrix output_mask(const std::vector<int>& dim_deg, const std::vector<int>& in_deg,
                          std::size_t context_cols) {
  const std::size_t dim = dim_deg.size();
  Matrix m(2 * dim, in_deg.size() + context_cols, 0.0);
  for (std::size_t half = 0; half < 2; ++half)
    for (std::size_t d = 0; d < dim; ++d) {
      const std::size_t o = half * dim + d;
      for (std::size_t j = 0; j < in_deg.size(); ++j) m(o, j) = in_deg[j] < dim_deg[d] ? 1.0 : 0.0;
      for (std::size_t j = 0; j < context_cols; ++j) m(o, in_deg.size() + j) = 1.0;
    }
  return m;
}

}  // namespace detail

/// Degree assignment and masks. Hidden degrees are uniform on {1..D−1} for an
/// unconditional net and on {0..D−1} when a context is present; degree-0 units
/// see only the context. With D = 1 and no context every hidden degree is 1.
inline MadeMasks build_masks(std::size_t dim, std::size_t context_dim,
                             std::span<const std::size_t> hidden, std::span<const std::size_t> order,
                             RngStream& rng) {
  if (dim < 1) throw ShapeError("build_masks: D must be at least 1");
  MadeMasks mm;
  mm.input_degrees = detail::degrees_from_order(dim, order);
  const int lo = context_dim > 0 ? 0 : 1;
  const int hi = static_cast<int>(dim) - 1;
  for (std::size_t h : hidden) {
    if (h < 1) throw ShapeError("build_masks: hidden sizes must be at least 1");
    std::vector<int> deg(h);
    for (int& g : deg)
      g = hi >= lo ? lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1))) : 1;
    mm.hidden_degrees.push_back(std::move(deg));
  }
  const std::vector<int>* prev = &mm.input_degrees;
  std::size_t ctx = context_dim;
  for (const auto& deg : mm.hidden_degrees) {
    mm.masks.push_back(detail::hidden_mask(deg, *prev, ctx));
    prev = &deg;
    ctx = 0;
  }
  mm.masks.push_back(detail::output_mask(mm.input_degrees, *prev, ctx));
  return mm;
}

/// Rebuilds masks from stored degrees (used when loading a saved model).
inline MadeMasks masks_from_degrees(std::vector<int> input_degrees,
                                    std::vector<std::vector<int>> hidden_degrees,
                                    std::size_t context_dim) {
  MadeMasks mm{std::move(input_degrees), std::move(hidden_degrees), {}};
  const std::vector<int>* prev = &mm.input_degrees;
  std::size_t ctx = context_dim;
  for (const auto& deg : mm.hidden_degrees) {
    mm.masks.push_back(detail::hidden_mask(deg, *prev, ctx));
    prev = &deg;
    ctx = 0;
  }
  mm.masks.push_back(detail::output_mask(mm.input_degrees, *prev, ctx));
  return mm;
}

inline std::vector<std::size_t> natural_order(std::size_t dim) {
  std::vector<std::size_t> o(dim);
  std::iota(o.begin(), o.end(), std::size_t{0});
  return o;
}

struct MadeForwardCache {
  Matrix input;                            // [x | context]
  std::vector<Matrix> preacts;             // per layer
  std::vector<Matrix> outputs;             // per layer
  Matrix shift;                            // N × D
  Matrix log_scale;                        // N × D, after clipping
  Matrix u;                                // N × D
  Vector log_det;                          // per row, −Σ α
};

class MadeNet {
 public:
  MadeNet() = default;

  /// Randomly initialized MADE. `order[k]` is the dimension placed k-th.
  MadeNet(std::size_t dim, std::size_t context_dim, std::vector<std::size_t> hidden,
          std::vector<std::size_t> order, RngStream& rng, Activation act = Activation::tanh)
      : dim_(dim), context_dim_(context_dim), hidden_(std::move(hidden)), order_(std::move(order)),
        activation_(act) {
    MadeMasks mm = build_masks(dim_, context_dim_, hidden_, order_, rng);
    assemble(std::move(mm));
    for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].init_uniform(rng);
    // log-scale rows start small so the net begins near the identity map
    MaskedLayer& out = layers_.back();
    for (std::size_t r = dim_; r < 2 * dim_; ++r)
      for (double& w : out.weight.row(r)) w *= 0.01;
  }

  MadeNet(std::size_t dim, std::size_t context_dim, std::vector<std::size_t> hidden,
          std::vector<std::size_t> order, MadeMasks masks, Activation act)
      : dim_(dim), context_dim_(context_dim), hidden_(std::move(hidden)), order_(std::move(order)),
        activation_(act) {
    assemble(std::move(masks));
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t context_dim() const noexcept { return context_dim_; }
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }
  const std::vector<std::size_t>& order() const noexcept { return order_; }
  const MadeMasks& masks() const noexcept { return masks_; }
  Activation activation() const noexcept { return activation_; }
  std::vector<MaskedLayer>& layers() noexcept { return layers_; }
  const std::vector<MaskedLayer>& layers() const noexcept { return layers_; }

  double log_scale_clip() const noexcept { return clip_; }
  void set_log_scale_clip(double c) noexcept { clip_ = c; }

  void zero_parameters() {
    for (auto& l : layers_) {
      std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }

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
  std::size_t set_params(std::span<const double> p, std::size_t offset = 0) {
    for (auto& l : layers_) offset = load_params(l, p, offset);
    return offset;
  }

  /// Shift and clipped log-scale for every row of x under `context`.
  void conditionals(const Matrix& x, const Matrix& context, Matrix& shift, Matrix& log_scale) const {
    MadeForwardCache c;
    run_network(x, context, c);
    shift = std::move(c.shift);
    log_scale = std::move(c.log_scale);
  }

  /// Forward (density) direction x → u with everything the backward pass needs.
  MadeForwardCache forward(const Matrix& x, const Matrix& context) const {
    MadeForwardCache c;
    run_network(x, context, c);
    const std::size_t n = x.rows();
    c.u = Matrix(n, dim_);
    c.log_det.assign(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      double ld = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) {
        const double a = c.log_scale(r, d);
        c.u(r, d) = (x(r, d) - c.shift(r, d)) * std::exp(-a);
        ld -= a;
      }
      c.log_det[r] = ld;
    }
    return c;
  }

  /// Backward pass given dL/du and dL/d(log_det) per row. Accumulates parameter
  /// gradients (same order as params()) into `grad` and returns dL/dx.
  Matrix backward(const MadeForwardCache& c, const Matrix& grad_u, std::span<const double> grad_log_det,
                  std::span<double> grad) const {
    const std::size_t n = c.u.rows();
    Matrix grad_x(n, dim_);
    Matrix grad_out(n, 2 * dim_);
    const Matrix& raw = c.outputs.back();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t d = 0; d < dim_; ++d) {
        const double inv_scale = std::exp(-c.log_scale(r, d));
        const double gu = grad_u(r, d);
        grad_x(r, d) = gu * inv_scale;
        grad_out(r, d) = -gu * inv_scale;
        const double ga = -gu * c.u(r, d) - grad_log_det[r];
        const double a_raw = raw(r, dim_ + d);
        grad_out(r, dim_ + d) = (a_raw > clip_ || a_raw < -clip_) ? 0.0 : ga;
      }
    Matrix g = std::move(grad_out);
    std::vector<LayerGrads> lg;
    lg.reserve(layers_.size());
    for (const auto& l : layers_) lg.emplace_back(l);
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Matrix& in = l == 0 ? c.input : c.outputs[l - 1];
      g = masked_affine_backward(layers_[l], in, c.preacts[l], c.outputs[l], g, lg[l]);
    }
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t d = 0; d < dim_; ++d) grad_x(r, d) += g(r, d);
    std::size_t off = 0;
    for (const auto& gl : lg) {
      for (double v : gl.weight.data()) grad[off++] += v;
      for (double v : gl.bias) grad[off++] += v;
    }
    return grad_x;
  }

  /// Inverse (sampling) direction u → x: D sequential passes in ordering.
  Matrix inverse(const Matrix& u, const Matrix& context) const {
    const std::size_t n = u.rows();
    Matrix x(n, dim_, 0.0);
    Matrix shift, log_scale;
    for (std::size_t k = 0; k < dim_; ++k) {
      conditionals(x, context, shift, log_scale);
      const std::size_t d = order_[k];
      for (std::size_t r = 0; r < n; ++r) x(r, d) = std::exp(log_scale(r, d)) * u(r, d) + shift(r, d);
    }
    return x;
  }

 private:
  void assemble(MadeMasks mm) {
    masks_ = std::move(mm);
    layers_.clear();
    std::size_t in = dim_ + context_dim_;
    for (std::size_t l = 0; l < hidden_.size(); ++l) {
      MaskedLayer layer(in, hidden_[l], activation_);
      layer.mask = masks_.masks[l];
      layers_.push_back(std::move(layer));
      in = hidden_[l];
    }
    MaskedLayer out(in, 2 * dim_, Activation::identity);
    out.mask = masks_.masks.back();
    layers_.push_back(std::move(out));
    for (const auto& l : layers_)
      if (l.mask.rows() != l.weight.rows() || l.mask.cols() != l.weight.cols())
        throw ShapeError("MADE mask shape does not match layer");
  }

  void run_network(const Matrix& x, const Matrix& context, MadeForwardCache& c) const {
    const std::size_t n = x.rows();
    if (x.cols() != dim_) throw ShapeError("MADE input has wrong dimension");
    if (context_dim_ > 0 && (context.rows() != n || context.cols() != context_dim_))
      throw ShapeError("MADE context has wrong shape");
    c.input = Matrix(n, dim_ + context_dim_);
    for (std::size_t r = 0; r < n; ++r) {
      auto dst = c.input.row(r);
      std::copy(x.row(r).begin(), x.row(r).end(), dst.begin());
      if (context_dim_ > 0)
        std::copy(context.row(r).begin(), context.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(dim_));
    }
    c.preacts.resize(layers_.size());
    c.outputs.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Matrix& in = l == 0 ? c.input : c.outputs[l - 1];
      c.outputs[l] = masked_affine_apply(layers_[l], in, &c.preacts[l]);
    }
    const Matrix& out = c.outputs.back();
    c.shift = Matrix(n, dim_);
    c.log_scale = Matrix(n, dim_);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t d = 0; d < dim_; ++d) {
        const double b = out(r, d);
        const double a = out(r, dim_ + d);
        if (!std::isfinite(b) || !std::isfinite(a))
          throw NumericError("MADE produced a non-finite conditional", r);
        c.shift(r, d) = b;
        c.log_scale(r, d) = std::clamp(a, -clip_, clip_);
      }
  }

  std::size_t dim_ = 0;
  std::size_t context_dim_ = 0;
  std::vector<std::size_t> hidden_;
  std::vector<std::size_t> order_;
  Activation activation_ = Activation::tanh;
  MadeMasks masks_;
  std::vector<MaskedLayer> layers_;
  double clip_ = 7.0;
};

/// Replicates a single context vector across `n` rows (empty when C = 0).
inline Matrix broadcast_context(std::span<const double> context, std::size_t n) {
  Matrix c(n, context.size());
  for (std::size_t r = 0; r < n; ++r) std::copy(context.begin(), context.end(), c.row(r).begin());
  return c;
}

struct MadeDensity {
  double log_prob;
  Vector u;
};

/// log q(x | context) = Σ_i [log N(u_i; 0, 1) − α_i] with u_i = (x_i − β_i) e^{−α_i}.
inline MadeDensity made_log_prob(const MadeNet& model, std::span<const double> x,
                                 std::span<const double> context = {}) {
  if (x.size() != model.dim() || context.size() != model.context_dim())
    throw ShapeError("made_log_prob: dimension mismatch");
  const MadeForwardCache c = model.forward(Matrix::row_vector(x), broadcast_context(context, 1));
  double lp = c.log_det[0];
  for (std::size_t d = 0; d < model.dim(); ++d) lp += std_normal_log_pdf(c.u(0, d));
  return {lp, c.u.row_copy(0)};
}

inline Vector made_log_prob_batch(const MadeNet& model, const Matrix& x, const Matrix& context) {
  const MadeForwardCache c = model.forward(x, context);
  Vector lp(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = c.log_det[r];
    for (std::size_t d = 0; d < model.dim(); ++d) s += std_normal_log_pdf(c.u(r, d));
    lp[r] = s;
  }
  return lp;
}

inline Matrix made_sample(const MadeNet& model, std::size_t n, std::span<const double> context,
                          RngStream& rng) {
  if (context.size() != model.context_dim()) throw ShapeError("made_sample: context dimension mismatch");
  Matrix u(n, model.dim());
  for (double& v : u.data()) v = rng.normal();
  return model.inverse(u, broadcast_context(context, n));
}

}  // namespace lfi
