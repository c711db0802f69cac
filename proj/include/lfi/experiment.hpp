#pragma once

// Batch experiment runner behind the `lfi` command: JSON config parsing,
// simulator/algorithm registries, output files and the bench comparison.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lfi/abc.hpp"
#include "lfi/io.hpp"
#include "lfi/seq_inference.hpp"
#include "lfi/simulators.hpp"

namespace lfi {

inline constexpr const char* toolkit_version = "0.1.0";

using io::json;

/// Reads keys out of a settings object and rejects any it did not consume.
class SettingsReader {
 public:
  SettingsReader(const json& j, std::string tag, std::string where)
      : j_(j.is_null() ? json::object() : j), tag_(std::move(tag)), where_(std::move(where)) {
    if (!j_.is_object()) fail("settings must be a JSON object");
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail("setting '" + key + "' has the wrong type");
    }
  }
  template <class T>
  std::optional<T> maybe(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail("setting '" + key + "' has the wrong type");
    }
  }
  const json& raw(const std::string& key) {
    used_.insert(key);
    static const json null_value;
    return j_.contains(key) ? j_.at(key) : null_value;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) fail("unknown setting '" + k + "'");
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(tag_, where_ + ": " + msg); }

 private:
  json j_;
  std::string tag_;
  std::string where_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Simulator registry

inline std::unique_ptr<Simulator> make_simulator(const std::string& name, const json& settings) {
  SettingsReader r(settings, "E_CONFIG_SIMULATOR", "simulator '" + name + "'");
  std::unique_ptr<Simulator> sim;
  if (name == "gaussian_toy") {
    GaussianToySettings s;
    s.dim = r.get("dim", s.dim);
    s.prior_mean = r.get("prior_mean", s.prior_mean);
    s.prior_variance = r.get("prior_variance", s.prior_variance);
    s.noise_variance = r.get("noise_variance", s.noise_variance);
    r.finish();
    sim = std::make_unique<GaussianToy>(s);
  } else if (name == "lotka_volterra") {
    LotkaVolterraSettings s;
    s.initial_prey = r.get("initial_prey", s.initial_prey);
    s.initial_predators = r.get("initial_predators", s.initial_predators);
    s.duration = r.get("duration", s.duration);
    s.grid_size = r.get("grid_size", s.grid_size);
    s.max_events = r.get("max_events", s.max_events);
    s.log_rate_low = r.get("log_rate_low", s.log_rate_low);
    s.log_rate_high = r.get("log_rate_high", s.log_rate_high);
    s.standardize = r.get("standardize", s.standardize);
    r.finish();
    sim = std::make_unique<LotkaVolterra>(s);
  } else if (name == "mg1") {
    Mg1Settings s;
    s.customers = r.get("customers", s.customers);
    s.service_low_max = r.get("service_low_max", s.service_low_max);
    s.service_width_max = r.get("service_width_max", s.service_width_max);
    s.arrival_rate_max = r.get("arrival_rate_max", s.arrival_rate_max);
    r.finish();
    sim = std::make_unique<Mg1>(s);
  } else {
    throw ConfigError("E_CONFIG_SIMULATOR", "unknown simulator '" + name + "'");
  }
  return sim;
}

inline const std::vector<std::string>& algorithm_names() {
  static const std::vector<std::string> names{"rejection", "smooth",  "mcmc-abc", "is-abc",    "smc-abc",
                                              "snpe-a",    "snpe-b", "snl",      "maxvar-snl"};
  return names;
}

// ---------------------------------------------------------------------------
// Config

struct ExperimentConfig {
  std::string simulator;
  json simulator_settings = json::object();
  std::string algorithm;
  json algorithm_settings = json::object();
  std::uint64_t seed = 0;
  std::string output_dir;
  std::optional<Vector> observation;
  std::optional<Vector> theta_true;
  std::vector<std::uint64_t> bench_seeds;  // optional, bench only
};

inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("E_CONFIG_PARSE", "config must be a JSON object");
  SettingsReader top(j, "E_CONFIG_SCHEMA", "config");
  if (top.get<int>("schema", 0) != 1) throw ConfigError("E_CONFIG_SCHEMA", "config needs \"schema\": 1");
  ExperimentConfig c;
  const json& sim = top.raw("simulator");
  if (!sim.is_object() || !sim.contains("name") || !sim.at("name").is_string())
    throw ConfigError("E_CONFIG_SIMULATOR", "simulator.name is required");
  {
    SettingsReader r(sim, "E_CONFIG_SIMULATOR", "simulator");
    c.simulator = r.get<std::string>("name", "");
    c.simulator_settings = r.raw("settings").is_null() ? json::object() : r.raw("settings");
    r.finish();
  }
  const json& alg = top.raw("algorithm");
  if (!alg.is_object() || !alg.contains("name") || !alg.at("name").is_string())
    throw ConfigError("E_CONFIG_ALGORITHM", "algorithm.name is required");
  {
    SettingsReader r(alg, "E_CONFIG_ALGORITHM", "algorithm");
    c.algorithm = r.get<std::string>("name", "");
    c.algorithm_settings = r.raw("settings").is_null() ? json::object() : r.raw("settings");
    r.finish();
  }
  const auto& names = algorithm_names();
  if (std::find(names.begin(), names.end(), c.algorithm) == names.end())
    throw ConfigError("E_CONFIG_ALGORITHM", "unknown algorithm '" + c.algorithm + "'");
  const json& seed = top.raw("seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
    throw ConfigError("E_CONFIG_SEED", "a non-negative integer seed is required");
  c.seed = seed.get<std::uint64_t>();
  c.output_dir = top.get<std::string>("output_dir", "");
  c.observation = top.maybe<Vector>("observation");
  c.theta_true = top.maybe<Vector>("theta_true");
  c.bench_seeds = top.get<std::vector<std::uint64_t>>("seeds", {});
  top.finish();
  if (!c.observation && !c.theta_true)
    throw ConfigError("E_CONFIG_OBSERVATION", "either observation or theta_true is required");
  return c;
}

inline ExperimentConfig load_config(const std::string& path, std::string* raw_text = nullptr) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError("E_CONFIG_PARSE", e.what());
  }
  if (raw_text) *raw_text = text;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("E_CONFIG_PARSE", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Algorithm settings

namespace detail {

inline TrainConfig read_train(const json& j) {
  SettingsReader r(j, "E_CONFIG_ALGORITHM", "train");
  TrainConfig t;
  t.minibatch = r.get("minibatch", t.minibatch);
  t.max_epochs = r.get("max_epochs", t.max_epochs);
  t.patience = r.get("patience", t.patience);
  t.validation_fraction = r.get("validation_fraction", t.validation_fraction);
  t.adam.learning_rate = r.get("learning_rate", t.adam.learning_rate);
  t.log_scale_clip = r.get("log_scale_clip", t.log_scale_clip);
  r.finish();
  try {
    t.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("E_CONFIG_ALGORITHM", e.what());
  }
  return t;
}

inline DistanceNorm read_norm(SettingsReader& r) {
  const std::string n = r.get<std::string>("norm", "euclidean");
  if (n == "euclidean") return DistanceNorm::euclidean;
  if (n == "max") return DistanceNorm::max;
  r.fail("unknown norm '" + n + "'");
}

inline SmoothKernel read_kernel(SettingsReader& r) {
  const std::string n = r.get<std::string>("kernel", "gaussian");
  if (n == "uniform") return SmoothKernel::uniform;
  if (n == "gaussian") return SmoothKernel::gaussian;
  if (n == "epanechnikov") return SmoothKernel::epanechnikov;
  r.fail("unknown kernel '" + n + "'");
}

inline Vector read_vector_or_scalar(SettingsReader& r, const std::string& key, std::size_t d, Vector fallback) {
  const json& v = r.raw(key);
  if (v.is_null()) return fallback;
  if (v.is_number()) return Vector(d, v.get<double>());
  if (v.is_array() && v.size() == d) return v.get<Vector>();
  r.fail("setting '" + key + "' must be a number or an array of length " + std::to_string(d));
}

inline AbcConfig read_abc(SettingsReader& r, double default_tol) {
  AbcConfig a;
  a.tolerance = r.get("tolerance", default_tol);
  a.norm = read_norm(r);
  a.max_simulations = r.get("max_simulations", a.max_simulations);
  try {
    a.validate();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  return a;
}

inline SnpeConfig read_snpe(SettingsReader& r, const std::optional<Vector>& theta_true) {
  SnpeConfig s;
  s.rounds = r.get("rounds", s.rounds);
  s.simulations_per_round = r.get("simulations_per_round", s.simulations_per_round);
  s.components = r.get("components", s.components);
  s.trunk = r.get("trunk", s.trunk);
  s.train = read_train(r.raw("train"));
  s.refine_epochs = r.maybe<std::size_t>("refine_epochs");
  s.proposal_variance_scale = r.get("proposal_variance_scale", s.proposal_variance_scale);
  s.posterior_samples = r.get("posterior_samples", s.posterior_samples);
  s.normalize = r.get("normalize", s.normalize);
  s.theta_true = theta_true;
  if (s.components < 1) r.fail("components must be at least 1");
  if (s.posterior_samples < 1) r.fail("posterior_samples must be at least 1");
  return s;
}

inline SnlConfig read_snl(SettingsReader& r, const std::optional<Vector>& theta_true) {
  SnlConfig s;
  s.rounds = r.get("rounds", s.rounds);
  s.simulations_per_round = r.get("simulations_per_round", s.simulations_per_round);
  s.flow_layers = r.get("flow_layers", s.flow_layers);
  s.hidden = r.get("hidden", s.hidden);
  s.train = read_train(r.raw("train"));
  s.burn_in = r.get("burn_in", s.burn_in);
  s.thin = r.get("thin", s.thin);
  s.posterior_samples = r.get("posterior_samples", s.posterior_samples);
  s.normalize = r.get("normalize", s.normalize);
  s.compute_mmd = r.get("compute_mmd", s.compute_mmd);
  s.ensemble_size = r.get("ensemble_size", s.ensemble_size);
  const json& search = r.raw("search");
  SettingsReader sr(search, "E_CONFIG_ALGORITHM", "search");
  s.search.starts = sr.get("starts", s.search.starts);
  s.search.max_iterations = sr.get("max_iterations", s.search.max_iterations);
  s.search.initial_step = sr.get("initial_step", s.search.initial_step);
  s.search.min_step = sr.get("min_step", s.search.min_step);
  sr.finish();
  s.theta_true = theta_true;
  if (s.flow_layers < 1) r.fail("flow_layers must be at least 1");
  if (s.thin < 1) r.fail("thin must be at least 1");
  if (s.posterior_samples < 1) r.fail("posterior_samples must be at least 1");
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Running

struct ExperimentResult {
  Matrix posterior;
  Vector weights;  // empty for unweighted samples
  std::vector<RoundTrace> rounds;
  std::size_t n_simulations = 0;
  bool terminated_early = false;
  std::string termination_reason;
  std::optional<double> neg_log_true_params;
  std::optional<double> mmd;
  double wall_clock_seconds = 0.0;
  Vector observation;
};

namespace detail {

inline RoundTrace single_round(const Matrix& samples, const Vector& weights, std::size_t sims,
                               const std::string& proposal) {
  RoundTrace t;
  t.round = 1;
  t.n_simulations = sims;
  t.cumulative_simulations = sims;
  t.proposal = proposal;
  summarize_samples(samples, weights, t);
  return t;
}

// Unweighted stand-in for a weighted population (multinomial resampling).
inline Matrix resample(const Matrix& params, const Vector& weights, std::size_t n, RngStream& rng) {
  Matrix out(n, params.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = rng.categorical(weights);
    std::copy(params.row(m).begin(), params.row(m).end(), out.row(i).begin());
  }
  return out;
}

inline std::optional<double> nltp(const Matrix& samples, const Vector& weights, const std::optional<Vector>& truth,
                                  std::uint64_t seed) {
  if (!truth || samples.rows() < 10) return std::nullopt;
  try {
    if (weights.empty()) return neg_log_true_params(samples, *truth);
    RngStream r(seed, 7);
    return neg_log_true_params(resample(samples, weights, samples.rows(), r), *truth);
  } catch (const DegenerateDataError&) {
    return std::numeric_limits<double>::infinity();
  }
}

inline ExperimentResult dispatch(const ExperimentConfig& c, const Simulator& sim, const Vector& x0, RngStream& rng) {
  ExperimentResult out;
  SettingsReader r(c.algorithm_settings, "E_CONFIG_ALGORITHM", "algorithm '" + c.algorithm + "'");
  const std::string& a = c.algorithm;
  const std::size_t d = sim.param_dim();
  if (a == "rejection") {
    const AbcConfig abc = read_abc(r, 0.5);
    const auto n = r.get<std::size_t>("n_accept", 1000);
    const bool adjust = r.get("regression_adjust", false);
    r.finish();
    AbcSamples s = rejection_abc(sim, x0, abc, n, rng);
    out.posterior = adjust ? linear_regression_adjust(s.samples, s.data, x0) : s.samples;
    out.n_simulations = s.n_simulated;
    out.rounds.push_back(single_round(out.posterior, {}, s.n_simulated, "prior"));
  } else if (a == "smooth") {
    AbcConfig abc = read_abc(r, 0.5);
    const SmoothKernel k = read_kernel(r);
    const auto n = r.get<std::size_t>("n", 1000);
    r.finish();
    WeightedPopulation p = smooth_rejection_abc(sim, x0, k, abc.tolerance, n, rng, abc.norm);
    out.posterior = std::move(p.params);
    out.weights = std::move(p.weights);
    out.n_simulations = p.n_simulated;
    out.rounds.push_back(single_round(out.posterior, out.weights, p.n_simulated, "prior"));
  } else if (a == "mcmc-abc") {
    const AbcConfig abc = read_abc(r, 0.5);
    const Vector step = read_vector_or_scalar(r, "proposal_std", d, sim.prior_std());
    const auto steps = r.get<std::size_t>("steps", 10000);
    const auto burn = r.get<std::size_t>("burn_in", 0);
    const auto thin = r.get<std::size_t>("thin", 1);
    r.finish();
    if (thin < 1 || burn >= steps) r.fail("need thin >= 1 and burn_in < steps");
    McmcAbcResult m = mcmc_abc(sim, x0, abc, step, steps, rng);
    for (std::size_t i = burn; i < steps; i += thin) out.posterior.append_row(m.chain.row(i));
    out.n_simulations = m.n_simulated;
    RoundTrace t = single_round(out.posterior, {}, m.n_simulated, "random-walk");
    t.diagnostics["acceptance_rate"] = static_cast<double>(m.n_accepted_moves) / static_cast<double>(steps);
    out.rounds.push_back(std::move(t));
  } else if (a == "is-abc") {
    const AbcConfig abc = read_abc(r, 0.5);
    const auto n = r.get<std::size_t>("n", 1000);
    const json& pj = r.raw("proposal");
    r.finish();
    std::unique_ptr<ProposalDensity> proposal;
    SettingsReader pr(pj, "E_CONFIG_ALGORITHM", "proposal");
    const std::string type = pr.get<std::string>("type", "prior");
    if (type == "prior") {
      proposal = std::make_unique<PriorProposal>(sim);
    } else if (type == "gaussian") {
      const Vector mean = pr.get<Vector>("mean", Vector(d, 0.0));
      const auto cov = pr.get<std::vector<Vector>>("covariance", {});
      if (mean.size() != d || cov.size() != d) pr.fail("gaussian proposal needs a mean and a d×d covariance");
      Matrix cm(d, d);
      for (std::size_t i = 0; i < d; ++i) {
        if (cov[i].size() != d) pr.fail("covariance must be d×d");
        for (std::size_t j = 0; j < d; ++j) cm(i, j) = cov[i][j];
      }
      try {
        proposal = std::make_unique<GaussianProposal>(GaussianDensity(mean, cm));
      } catch (const NumericError&) {
        pr.fail("proposal covariance is not positive-definite");
      }
    } else {
      pr.fail("unknown proposal type '" + type + "'");
    }
    pr.finish();
    WeightedPopulation p = is_abc(sim, x0, abc, *proposal, n, rng);
    out.posterior = std::move(p.params);
    out.weights = std::move(p.weights);
    out.n_simulations = p.n_simulated;
    out.rounds.push_back(single_round(out.posterior, out.weights, p.n_simulated, type));
  } else if (a == "smc-abc") {
    SmcAbcConfig s;
    s.schedule = r.get<std::vector<double>>("schedule", {});
    s.population = r.get("population", s.population);
    s.ess_min = r.maybe<double>("ess_min");
    s.abc.norm = read_norm(r);
    s.abc.max_simulations = r.get("max_simulations", s.abc.max_simulations);
    r.finish();
    SmcAbcResult res = smc_abc(sim, x0, s, rng);
    out.posterior = std::move(res.population.params);
    out.weights = std::move(res.population.weights);
    out.n_simulations = res.total_simulations;
    out.rounds = std::move(res.rounds);
  } else if (a == "snpe-a") {
    const SnpeConfig s = read_snpe(r, c.theta_true);
    r.finish();
    SnpeAResult res = snpe_a_run(sim, x0, s, rng);
    out.posterior = std::move(res.samples);
    out.rounds = std::move(res.rounds);
    out.terminated_early = res.terminated_early;
    out.termination_reason = res.termination_reason;
  } else if (a == "snpe-b") {
    const SnpeConfig s = read_snpe(r, c.theta_true);
    r.finish();
    SnpeBResult res = snpe_b_run(sim, x0, s, rng);
    out.posterior = std::move(res.samples);
    out.rounds = std::move(res.rounds);
  } else if (a == "snl" || a == "maxvar-snl") {
    const SnlConfig s = read_snl(r, c.theta_true);
    r.finish();
    SnlResult res = a == "snl" ? snl_run(sim, x0, s, rng) : maxvar_snl_run(sim, x0, s, rng);
    out.posterior = std::move(res.samples);
    out.rounds = std::move(res.rounds);
  }
  if (!out.rounds.empty()) {
    out.n_simulations = out.rounds.back().cumulative_simulations;
    out.mmd = out.rounds.back().mmd;
    // one-shot ABC traces get the run-level metric too
    if (!out.rounds.back().neg_log_true_params)
      out.rounds.back().neg_log_true_params = nltp(out.posterior, out.weights, c.theta_true, c.seed);
    out.neg_log_true_params = out.rounds.back().neg_log_true_params;
  }
  return out;
}

}  // namespace detail

/// Observation x₀: given explicitly, or simulated at θ_true from (seed, 1).
inline Vector resolve_observation(const ExperimentConfig& c, const Simulator& sim) {
  if (c.observation) {
    if (c.observation->size() != sim.data_dim())
      throw ConfigError("E_CONFIG_OBSERVATION", "observation has " + std::to_string(c.observation->size()) +
                                                    " entries, simulator emits " + std::to_string(sim.data_dim()));
    return *c.observation;
  }
  if (c.theta_true->size() != sim.param_dim())
    throw ConfigError("E_CONFIG_OBSERVATION", "theta_true has the wrong dimension");
  RngStream r(c.seed, 1);
  return sim.simulate(*c.theta_true, r);
}

inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  const std::unique_ptr<Simulator> sim = make_simulator(c.simulator, c.simulator_settings);
  if (c.theta_true && c.theta_true->size() != sim->param_dim())
    throw ConfigError("E_CONFIG_OBSERVATION", "theta_true has the wrong dimension");
  const Vector x0 = resolve_observation(c, *sim);
  RngStream rng(c.seed, 0);
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult res = detail::dispatch(c, *sim, x0, rng);
  res.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.observation = x0;
  return res;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes posterior.csv, traces.jsonl, metrics.json and finally manifest.json
/// (via a temporary file and rename).
inline void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& c, const ExperimentResult& res,
                          const std::string& config_text, const std::string& started_at) {
  std::filesystem::create_directories(dir);
  const std::string posterior = io::population_csv(res.posterior, res.weights);
  const std::string traces = io::traces_jsonl(res.rounds);
  json rounds_seconds = json::array();
  for (const auto& t : res.rounds) rounds_seconds.push_back(t.wall_clock_seconds);
  const json metrics{{"algorithm", c.algorithm},
                     {"simulator", c.simulator},
                     {"seed", c.seed},
                     {"observation", res.observation},
                     {"n_simulations", res.n_simulations},
                     {"n_rounds", res.rounds.size()},
                     {"neg_log_true_params", io::optional_number(res.neg_log_true_params)},
                     {"mmd", io::optional_number(res.mmd)},
                     {"terminated_early", res.terminated_early},
                     {"termination_reason", res.termination_reason},
                     {"wall_clock_seconds", res.wall_clock_seconds},
                     {"round_wall_clock_seconds", rounds_seconds}};
  const std::string metrics_text = metrics.dump(2) + '\n';
  io::write_file((dir / "posterior.csv").string(), posterior);
  io::write_file((dir / "traces.jsonl").string(), traces);
  io::write_file((dir / "metrics.json").string(), metrics_text);
  json files = json::array();
  for (const auto& [name, body] : {std::pair<std::string, const std::string*>{"posterior.csv", &posterior},
                                   {"traces.jsonl", &traces},
                                   {"metrics.json", &metrics_text}})
    files.push_back(json{{"name", name}, {"bytes", body->size()}, {"fnv1a", io::fnv1a_hex(*body)}});
  const json manifest{{"config_hash", io::fnv1a_hex(config_text)},
                      {"toolkit_version", toolkit_version},
                      {"seed", c.seed},
                      {"started_at", started_at},
                      {"finished_at", utc_timestamp()},
                      {"files", files}};
  const auto tmp = dir / "manifest.json.tmp";
  io::write_file(tmp.string(), manifest.dump(2) + '\n');
  std::filesystem::rename(tmp, dir / "manifest.json");
}

// ---------------------------------------------------------------------------
// Bench

struct CurveRow {
  std::string algorithm;
  std::uint64_t seed;
  std::size_t cumulative_sims;
  std::optional<double> neg_log_true_params;
};

/// Runs every *.json config in `dir` (sorted by file name), each over its
/// "seeds" list when present, and collects one row per round.
inline std::vector<CurveRow> run_bench(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) throw ConfigError("E_CONFIG_BENCH", "not a directory: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("E_CONFIG_BENCH", "no .json configs in " + dir.string());
  std::vector<ExperimentConfig> configs;
  for (const auto& f : files) configs.push_back(load_config(f.string()));
  for (const auto& c : configs)
    if (c.simulator != configs.front().simulator || c.simulator_settings != configs.front().simulator_settings ||
        c.theta_true != configs.front().theta_true)
      throw ConfigError("E_CONFIG_BENCH", "bench configs must share the simulator and theta_true");
  if (!configs.front().theta_true) throw ConfigError("E_CONFIG_BENCH", "bench configs need theta_true");
  std::vector<CurveRow> rows;
  for (ExperimentConfig c : configs) {
    std::vector<std::uint64_t> seeds = c.bench_seeds.empty() ? std::vector<std::uint64_t>{c.seed} : c.bench_seeds;
    for (std::uint64_t s : seeds) {
      c.seed = s;
      const ExperimentResult res = run_experiment(c);
      for (const auto& t : res.rounds) rows.push_back({c.algorithm, s, t.cumulative_simulations, t.neg_log_true_params});
    }
  }
  return rows;
}

inline std::string curves_csv(const std::vector<CurveRow>& rows) {
  std::string out = "algorithm,seed,cumulative_sims,neg_log_true_params\n";
  for (const auto& r : rows)
    out += r.algorithm + ',' + std::to_string(r.seed) + ',' + std::to_string(r.cumulative_sims) + ',' +
           (r.neg_log_true_params ? io::format_double(*r.neg_log_true_params) : std::string("nan")) + '\n';
  return out;
}

}  // namespace lfi
