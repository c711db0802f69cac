#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "lfi/matrix.hpp"
#include "lfi/rng.hpp"

namespace lfi {

enum class Activation { identity, tanh, relu };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "identity";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ShapeError("unknown activation '" + std::string(s) + "'");
}

/// Affine layer whose effective weight is weight ⊙ mask. A dense layer is a
/// masked layer with an all-ones mask.
struct MaskedLayer {
  Matrix weight;  // out × in
  Vector bias;    // out
  Matrix mask;    // out × in, entries in {0, 1}
  Activation activation = Activation::identity;

  MaskedLayer() = default;
  MaskedLayer(std::size_t in, std::size_t out, Activation act)
      : weight(out, in), bias(out, 0.0), mask(out, in, 1.0), activation(act) {}

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
  std::size_t num_params() const noexcept { return weight.size() + bias.size(); }

  /// Glorot-uniform weights, zero bias.
  void init_uniform(RngStream& rng, double scale = 1.0) {
    const double lim = scale * std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
    for (double& w : weight.data()) w = rng.uniform(-lim, lim);
    std::fill(bias.begin(), bias.end(), 0.0);
  }
};

/// Parameter gradients of one layer, same shapes as the layer.
struct LayerGrads {
  Matrix weight;
  Vector bias;

  explicit LayerGrads(const MaskedLayer& l) : weight(l.out_dim(), l.in_dim()), bias(l.out_dim(), 0.0) {}
};

namespace detail {
inline double activate(Activation a, double z) noexcept {
  switch (a) {
    case Activation::identity: return z;
    case Activation::tanh: return std::tanh(z);
    case Activation::relu: return z > 0.0 ? z : 0.0;
  }
  return z;
}
// Derivative expressed through the pre-activation and the output.
inline double activate_grad(Activation a, double z, double y) noexcept {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}
}  // namespace detail

/// Batched forward pass: row n of the result is
/// activation((weight ⊙ mask) · input.row(n) + bias). When `preact` is given it
/// receives the pre-activations needed by the backward pass.
inline Matrix masked_affine_apply(const MaskedLayer& layer, const Matrix& input,
                                  Matrix* preact = nullptr) {
  const std::size_t in = layer.in_dim();
  const std::size_t out = layer.out_dim();
  if (input.cols() != in)
    throw ShapeError("masked_affine_apply: input has " + std::to_string(input.cols()) +
                     " columns, layer expects " + std::to_string(in));
  Matrix w_eff(out, in);
  {
    auto we = w_eff.data();
    auto w = layer.weight.data();
    auto m = layer.mask.data();
    for (std::size_t k = 0; k < we.size(); ++k) we[k] = w[k] * m[k];
  }
  Matrix y(input.rows(), out);
  if (preact) *preact = Matrix(input.rows(), out);
  for (std::size_t n = 0; n < input.rows(); ++n) {
    auto x = input.row(n);
    auto yr = y.row(n);
    for (std::size_t j = 0; j < out; ++j) {
      auto wr = w_eff.row(j);
      double s = layer.bias[j];
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * x[i];
      if (preact) (*preact)(n, j) = s;
      yr[j] = detail::activate(layer.activation, s);
    }
  }
  return y;
}

/// Backward pass of masked_affine_apply. Accumulates parameter gradients into
/// `grads` and returns the gradient with respect to the input.
inline Matrix masked_affine_backward(const MaskedLayer& layer, const Matrix& input,
                                     const Matrix& preact, const Matrix& output,
                                     const Matrix& grad_output, LayerGrads& grads) {
  const std::size_t in = layer.in_dim();
  const std::size_t out = layer.out_dim();
  Matrix grad_input(input.rows(), in);
  Vector gpre(out);
  for (std::size_t n = 0; n < input.rows(); ++n) {
    auto x = input.row(n);
    auto gi = grad_input.row(n);
    for (std::size_t j = 0; j < out; ++j)
      gpre[j] = grad_output(n, j) * detail::activate_grad(layer.activation, preact(n, j), output(n, j));
    for (std::size_t j = 0; j < out; ++j) {
      const double g = gpre[j];
      if (g == 0.0) continue;
      grads.bias[j] += g;
      auto gw = grads.weight.row(j);
      auto w = layer.weight.row(j);
      auto m = layer.mask.row(j);
      for (std::size_t i = 0; i < in; ++i) {
        if (m[i] == 0.0) continue;
        gw[i] += g * x[i];
        gi[i] += g * w[i];
      }
    }
  }
  return grad_input;
}

/// Appends weight then bias to `out`.
inline void append_params(const MaskedLayer& l, Vector& out) {
  out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
  out.insert(out.end(), l.bias.begin(), l.bias.end());
}
inline void append_grads(const LayerGrads& g, Vector& out) {
  out.insert(out.end(), g.weight.data().begin(), g.weight.data().end());
  out.insert(out.end(), g.bias.begin(), g.bias.end());
}
/// Reads weight then bias from `src` starting at `offset`; returns the new offset.
inline std::size_t load_params(MaskedLayer& l, std::span<const double> src, std::size_t offset) {
  if (offset + l.num_params() > src.size()) throw ShapeError("parameter vector too short");
  auto w = l.weight.data();
  std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(offset), w.size(), w.begin());
  offset += w.size();
  std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(offset), l.bias.size(), l.bias.begin());
  return offset + l.bias.size();
}

}  // namespace lfi
