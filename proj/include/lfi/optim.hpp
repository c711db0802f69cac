#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <utility>

#include "lfi/matrix.hpp"

namespace lfi {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  Vector first_moment;
  Vector second_moment;
  AdamSettings settings;

  AdamState() = default;
  explicit AdamState(std::size_t n, AdamSettings s = {})
      : first_moment(n, 0.0), second_moment(n, 0.0), settings(s) {}
};

/// In-place bias-corrected Adam update for minimizing a loss.
inline void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and moment lengths differ");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i), i);
  const auto& s = state.settings;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g * g;
    params[i] -= s.learning_rate * (m / c1) / (std::sqrt(v / c2) + s.epsilon);
  }
}

inline std::pair<AdamState, Vector> adam_step(const AdamState& state, std::span<const double> params,
                                              std::span<const double> grads) {
  std::pair<AdamState, Vector> out{state, Vector(params.begin(), params.end())};
  adam_update(out.first, out.second, grads);
  return out;
}

/// Central-difference gradient of `f` at `at`.
inline Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> at, double h) {
  if (!(h > 0.0)) throw NumericError("finite_diff_grad: step must be positive");
  Vector x(at.begin(), at.end());
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i), i);
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace lfi
