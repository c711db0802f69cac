// Command-line front end: run / bench / selftest.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lfi/experiment.hpp"
#include "lfi/selftest.hpp"

namespace {

int report(const lfi::Error& e, int code) {
  std::string what = e.what();
  for (char& ch : what)
    if (ch == '\n') ch = ' ';
  std::cerr << "error: " << e.tag() << ": " << what << '\n';
  return code;
}

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed, const std::string& out) {
  std::string text;
  lfi::ExperimentConfig cfg;
  try {
    cfg = lfi::load_config(config_path, &text);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.output_dir = out;
    if (cfg.output_dir.empty()) throw lfi::ConfigError("E_CONFIG_OUTPUT", "no output directory (config or --out)");
  } catch (const lfi::ConfigError& e) {
    return report(e, 2);
  }
  const std::string started = lfi::utc_timestamp();
  try {
    const lfi::ExperimentResult res = lfi::run_experiment(cfg);
    lfi::write_outputs(cfg.output_dir, cfg, res, text, started);
    if (res.terminated_early) {
      std::cerr << "error: E_EARLY_TERMINATION: " << res.termination_reason << '\n';
      return 4;
    }
    return 0;
  } catch (const lfi::ConfigError& e) {
    return report(e, 2);
  } catch (const lfi::Error& e) {
    return report(e, 3);
  } catch (const std::exception& e) {
    std::cerr << "error: E_RUNTIME: " << e.what() << '\n';
    return 3;
  }
}

int cmd_bench(const std::string& dir, const std::string& out) {
  try {
    const auto rows = lfi::run_bench(dir);
    const std::filesystem::path target = out.empty() ? std::filesystem::path(dir) / "curves.csv" : std::filesystem::path(out);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    lfi::io::write_file(target.string(), lfi::curves_csv(rows));
    std::cout << target.string() << '\n';
    return 0;
  } catch (const lfi::ConfigError& e) {
    return report(e, 2);
  } catch (const lfi::Error& e) {
    return report(e, 3);
  } catch (const std::exception& e) {
    std::cerr << "error: E_RUNTIME: " << e.what() << '\n';
    return 3;
  }
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& r : lfi::run_selftest()) {
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << r.name;
    if (!r.detail.empty()) std::cout << "  (" << r.detail << ')';
    std::cout << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"likelihood-free inference toolkit"};
  app.require_subcommand(1);

  std::string config, out, bench_dir, bench_out;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "run one experiment from a JSON config");
  run->add_option("--config", config, "config file")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out, "override the output directory");

  auto* bench = app.add_subcommand("bench", "run a directory of configs and write curves.csv");
  bench->add_option("--configs", bench_dir, "directory of configs")->required();
  bench->add_option("--out", bench_out, "curves.csv path (default: <configs>/curves.csv)");

  auto* self = app.add_subcommand("selftest", "run the quick invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: E_USAGE: " << e.what() << '\n';
    return 2;
  }
  if (*run) return cmd_run(config, seed, out);
  if (*bench) return cmd_bench(bench_dir, bench_out);
  if (*self) return cmd_selftest();
  return 2;
}
