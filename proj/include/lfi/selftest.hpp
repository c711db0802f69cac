#pragma once

// Quick invariant checks run by `lfi selftest`. Each check is small enough
// that the whole suite finishes in a few seconds.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lfi/abc.hpp"
#include "lfi/classic_density.hpp"
#include "lfi/maf.hpp"
#include "lfi/mdn.hpp"
#include "lfi/simulators.hpp"

namespace lfi {

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

template <class M>
bool gradient_agrees(const M& model, const Matrix& t, const Matrix& c, double tol) {
  auto [loss, grad] = loss_and_grad(model, t, c, {});
  const Vector p0 = model.params();
  M probe = model;
  const Vector fd = finite_diff_grad(
      [&](std::span<const double> p) {
        probe.set_params(p);
        return loss_and_grad(probe, t, c, {}).first;
      },
      p0, 1e-5);
  for (std::size_t i = 0; i < p0.size(); ++i)
    if (relative_error(grad[i], fd[i]) > tol) return false;
  return true;
}

}  // namespace detail

inline std::vector<SelftestResult> run_selftest() {
  std::vector<SelftestResult> out;
  auto check = [&](const std::string& name, const std::function<bool()>& fn) {
    try {
      out.push_back({name, fn(), ""});
    } catch (const std::exception& e) {
      out.push_back({name, false, e.what()});
    }
  };

  check("adam first step has magnitude lr", [] {
    AdamState s(1, AdamSettings{0.1});
    Vector p{0.0};
    const Vector g{1.0};
    adam_update(s, p, g);
    return std::abs(p[0] + 0.1) < 1e-8;
  });

  check("made autoregressive property", [] {
    RngStream rng(11, 0);
    const MadeNet m(4, 2, {16, 16}, {2, 0, 3, 1}, rng);
    Matrix x(1, 4), c(1, 2);
    for (double& v : x.data()) v = rng.normal();
    for (double& v : c.data()) v = rng.normal();
    Matrix s0, a0;
    m.conditionals(x, c, s0, a0);
    for (std::size_t pos = 0; pos < 4; ++pos) {
      Matrix xp = x;
      xp(0, m.order()[pos]) += 1.7;
      Matrix s1, a1;
      m.conditionals(xp, c, s1, a1);
      for (std::size_t k = 0; k <= pos; ++k) {
        const std::size_t dim = m.order()[k];
        if (s0(0, dim) != s1(0, dim) || a0(0, dim) != a1(0, dim)) return false;
      }
    }
    return true;
  });

  check("maf gradient matches finite differences", [] {
    RngStream rng(12, 0);
    const MafModel m(2, 1, 2, {5}, rng);
    Matrix t(3, 2), c(3, 1);
    for (double& v : t.data()) v = rng.uniform(-1, 1);
    for (double& v : c.data()) v = rng.uniform(-1, 1);
    return detail::gradient_agrees(m, t, c, 1e-5);
  });

  check("mdn gradient matches finite differences", [] {
    RngStream rng(13, 0);
    const MdnModel m(1, 2, {4}, 2, rng);
    Matrix t(3, 2), c(3, 1);
    for (double& v : t.data()) v = rng.uniform(-1, 1);
    for (double& v : c.data()) v = rng.uniform(-1, 1);
    return detail::gradient_agrees(m, t, c, 1e-5);
  });

  check("maf density integrates to one", [] {
    RngStream rng(14, 0);
    const MafModel m(1, 0, 3, {8}, rng);
    double mass = 0.0;
    const double h = 1e-3;
    for (double x = -12.0; x <= 12.0; x += h) mass += std::exp(maf_log_prob(m, std::array{x})) * h;
    return std::abs(mass - 1.0) < 1e-3;
  });

  check("ess edge cases", [] {
    return ess_estimate(Vector(8, 0.125)) == 8.0 && ess_estimate(Vector{0, 1, 0}) == 1.0 &&
           ess_estimate(Vector{0.5, 0.5, 0, 0}) == 2.0;
  });

  check("snpea correction identity and precision subtraction", [] {
    const GaussianMixture q(Vector{1.0}, {GaussianDensity::isotropic({0.0}, 1.0)});
    const GaussianDensity p = GaussianDensity::isotropic({0.3}, 2.0);
    const GaussianMixture same = snpea_correct(q, p, p);
    const GaussianMixture c = snpea_correct(q, GaussianDensity::isotropic({0.0}, 2.0), std::nullopt);
    return same.components()[0] == q.components()[0] &&
           std::abs(c.components()[0].covariance()(0, 0) - 2.0) < 1e-12 &&
           std::abs(c.components()[0].mean()[0]) < 1e-12;
  });

  check("gaussian toy conjugate posterior", [] {
    const GaussianToy toy;
    const auto post = toy.exact_posterior(std::array{1.0});
    return post && std::abs(post->mean()[0] - 0.5) < 1e-15 && std::abs(post->covariance()(0, 0) - 0.5) < 1e-15;
  });

  check("simulators are pure given the stream", [] {
    const LotkaVolterra lv;
    const Mg1 q;
    RngStream a(15, 3), b(15, 3);
    const Vector th{-0.5, -4.0, -0.5, -3.0};
    const Vector mq{1.0, 4.0, 0.2};
    return lv.simulate(th, a) == lv.simulate(th, b) && q.simulate(mq, a) == q.simulate(mq, b);
  });

  return out;
}

}  // namespace lfi
