#pragma once

// JSON model store and CSV / JSON-lines writers. Floats go through
// nlohmann::json, whose shortest round-trip formatting reloads bit-exactly;
// CSV uses %.17g.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfi/classic_density.hpp"
#include "lfi/maf.hpp"
#include "lfi/mdn.hpp"
#include "lfi/trace.hpp"

namespace lfi::io {

using json = nlohmann::json;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.storage()}};
}
inline Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(), j.at("data").get<Vector>());
}

namespace detail {
inline void expect_kind(const json& j, const char* kind) {
  if (j.at("kind").get<std::string>() != kind)
    throw ShapeError(std::string("model document is not of kind '") + kind + "'");
}
}  // namespace detail

// --- classic densities -------------------------------------------------------

inline json to_json(const GaussianDensity& g) {
  return json{{"kind", "gaussian"}, {"mean", g.mean()}, {"covariance", matrix_to_json(g.covariance())}};
}
inline GaussianDensity gaussian_from_json(const json& j) {
  detail::expect_kind(j, "gaussian");
  return GaussianDensity(j.at("mean").get<Vector>(), matrix_from_json(j.at("covariance")));
}

inline json to_json(const HistogramModel& h) {
  return json{{"kind", "histogram"}, {"edges", h.edges()}, {"densities", h.densities()}};
}
inline HistogramModel histogram_from_json(const json& j) {
  detail::expect_kind(j, "histogram");
  return HistogramModel(j.at("edges").get<std::vector<Vector>>(), j.at("densities").get<Vector>());
}

inline json to_json(const KdeModel& k) {
  return json{{"kind", "kde"},
              {"kernel", k.kernel == KdeKernel::gaussian ? "gaussian" : "epanechnikov"},
              {"bandwidth", k.bandwidth},
              {"points", matrix_to_json(k.points)}};
}
inline KdeModel kde_from_json(const json& j) {
  detail::expect_kind(j, "kde");
  const std::string kernel = j.at("kernel").get<std::string>();
  if (kernel != "gaussian" && kernel != "epanechnikov") throw ShapeError("unknown KDE kernel '" + kernel + "'");
  return KdeModel(matrix_from_json(j.at("points")), j.at("bandwidth").get<double>(),
                  kernel == "gaussian" ? KdeKernel::gaussian : KdeKernel::epanechnikov);
}

// --- flows -------------------------------------------------------------------

inline json to_json(const MadeNet& m) {
  return json{{"kind", "made"},
              {"D", m.dim()},
              {"C", m.context_dim()},
              {"hidden", m.hidden()},
              {"order", m.order()},
              {"activation", std::string(to_string(m.activation()))},
              {"log_scale_clip", m.log_scale_clip()},
              {"input_degrees", m.masks().input_degrees},
              {"hidden_degrees", m.masks().hidden_degrees},
              {"params", m.params()}};
}
inline MadeNet made_from_json(const json& j) {
  detail::expect_kind(j, "made");
  const auto c = j.at("C").get<std::size_t>();
  MadeMasks mm = masks_from_degrees(j.at("input_degrees").get<std::vector<int>>(),
                                    j.at("hidden_degrees").get<std::vector<std::vector<int>>>(), c);
  MadeNet m(j.at("D").get<std::size_t>(), c, j.at("hidden").get<std::vector<std::size_t>>(),
            j.at("order").get<std::vector<std::size_t>>(), std::move(mm),
            activation_from_string(j.at("activation").get<std::string>()));
  m.set_log_scale_clip(j.at("log_scale_clip").get<double>());
  const Vector p = j.at("params").get<Vector>();
  if (m.set_params(p) != p.size()) throw ShapeError("MADE parameter array has wrong length");
  return m;
}

inline json to_json(const MafModel& m) {
  json layers = json::array();
  for (const auto& l : m.layers()) layers.push_back(to_json(l));
  return json{{"kind", "maf"}, {"D", m.dim()}, {"C", m.context_dim()}, {"permutations", m.permutations()},
              {"layers", layers}};
}
inline MafModel maf_from_json(const json& j) {
  detail::expect_kind(j, "maf");
  std::vector<MadeNet> layers;
  for (const auto& l : j.at("layers")) layers.push_back(made_from_json(l));
  return MafModel(std::move(layers), j.at("permutations").get<std::vector<Permutation>>());
}

// --- MDN ---------------------------------------------------------------------

inline json to_json(const MdnModel& m) {
  return json{{"kind", "mdn"},
              {"context_dim", m.context_dim()},
              {"target_dim", m.target_dim()},
              {"trunk", m.trunk()},
              {"components", m.components()},
              {"params", m.params()}};
}
inline MdnModel mdn_from_json(const json& j) {
  detail::expect_kind(j, "mdn");
  RngStream unused(0, 0);
  MdnModel m(j.at("context_dim").get<std::size_t>(), j.at("target_dim").get<std::size_t>(),
             j.at("trunk").get<std::vector<std::size_t>>(), j.at("components").get<std::size_t>(), unused);
  m.set_params(j.at("params").get<Vector>());
  return m;
}

inline json to_json(const GaussianMixture& q) {
  json comps = json::array();
  for (const auto& c : q.components()) comps.push_back(to_json(c));
  return json{{"kind", "gaussian_mixture"}, {"weights", q.weights()}, {"components", comps}};
}

// --- tabular outputs ---------------------------------------------------------

/// Header θ₁..θ_d (ASCII: theta_1..theta_d), optional trailing weight column.
inline std::string population_csv(const Matrix& params, const Vector& weights = {}) {
  std::string out;
  for (std::size_t j = 0; j < params.cols(); ++j) out += (j ? ",theta_" : "theta_") + std::to_string(j + 1);
  if (!weights.empty()) out += ",weight";
  out += '\n';
  for (std::size_t r = 0; r < params.rows(); ++r) {
    for (std::size_t j = 0; j < params.cols(); ++j) {
      if (j) out += ',';
      out += format_double(params(r, j));
    }
    if (!weights.empty()) out += ',' + format_double(weights[r]);
    out += '\n';
  }
  return out;
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

/// One round as a JSON object. Wall-clock time is deliberately left out so
/// that traces are reproducible byte for byte.
inline json trace_to_json(const RoundTrace& t) {
  json cov = json::array();
  for (std::size_t i = 0; i < t.posterior_covariance.rows(); ++i) cov.push_back(t.posterior_covariance.row_copy(i));
  json diag = json::object();
  for (const auto& [k, v] : t.diagnostics) diag[k] = v;
  return json{{"round", t.round},
              {"n_simulations", t.n_simulations},
              {"cumulative_simulations", t.cumulative_simulations},
              {"proposal", t.proposal},
              {"posterior_mean", t.posterior_mean},
              {"posterior_covariance", cov},
              {"neg_log_true_params", optional_number(t.neg_log_true_params)},
              {"mmd", optional_number(t.mmd)},
              {"diagnostics", diag}};
}

inline std::string traces_jsonl(const std::vector<RoundTrace>& traces) {
  std::string out;
  for (const auto& t : traces) out += trace_to_json(t).dump() + '\n';
  return out;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << content;
  if (!f) throw Error("E_IO", "cannot write " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("E_IO", "cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

/// 64-bit FNV-1a as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lfi::io
