// Regenerates include/lfi/lv_constants.hpp: mean and standard deviation of
// each raw Lotka–Volterra summary over prior-predictive simulations.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "lfi/parallel.hpp"
#include "lfi/simulators.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: lv_standardize <output header>\n";
    return 2;
  }
  namespace c = lfi::lv_constants;
  lfi::LotkaVolterraSettings s;
  s.standardize = false;
  const lfi::LotkaVolterra sim(s);
  lfi::RngStream rng(c::seed, 0);
  const std::uint64_t base = rng.next_u64();
  std::vector<lfi::Vector> raw(c::n_simulations);
  lfi::parallel_for(0, c::n_simulations, [&](std::size_t i) {
    lfi::RngStream r(base, i);
    raw[i] = sim.simulate(sim.prior_sample(r), r);
  });
  std::vector<double> mean(9, 0.0), sd(9, 0.0);
  for (const auto& v : raw)
    for (std::size_t j = 0; j < 9; ++j) mean[j] += v[j];
  for (double& m : mean) m /= static_cast<double>(raw.size());
  for (const auto& v : raw)
    for (std::size_t j = 0; j < 9; ++j) sd[j] += (v[j] - mean[j]) * (v[j] - mean[j]);
  for (double& x : sd) {
    x = std::sqrt(x / static_cast<double>(raw.size() - 1));
    if (!(x > 0.0)) x = 1.0;
  }

  auto fmt = [](const std::vector<double>& v) {
    std::string out;
    char buf[40];
    for (std::size_t j = 0; j < v.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", v[j]);
      out += (j ? ", " : "") + std::string(buf);
    }
    return out;
  };
  std::ofstream f(argv[1]);
  f << "#pragma once\n\n// Generated by tools/lv_standardize.cpp; do not edit by hand.\n\n"
       "#include <array>\n#include <cstdint>\n\nnamespace lfi::lv_constants {\n\n"
    << "inline constexpr std::uint64_t seed = " << c::seed << ";\n"
    << "inline constexpr std::size_t n_simulations = " << c::n_simulations << ";\n"
    << "inline constexpr std::array<double, 9> summary_mean{" << fmt(mean) << "};\n"
    << "inline constexpr std::array<double, 9> summary_scale{" << fmt(sd) << "};\n\n"
    << "}  // namespace lfi::lv_constants\n";
  return f ? 0 : 1;
}
