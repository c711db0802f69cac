#include <gtest/gtest.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "lfi/experiment.hpp"

namespace fs = std::filesystem;
using lfi::io::json;

namespace {

const fs::path cli = LFI_CLI_PATH;
const fs::path configs = fs::path(LFI_SOURCE_DIR) / "configs";

struct Outcome {
  int code;
  std::string err;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("lfi_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome run(const std::string& args) const {
    const fs::path err = dir_ / "stderr.txt", out = dir_ / "stdout.txt";
    const std::string cmd = cli.string() + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, lfi::io::read_file(err.string()),
            lfi::io::read_file(out.string())};
  }

  fs::path write_config(const std::string& name, const json& j) const {
    const fs::path p = dir_ / name;
    lfi::io::write_file(p.string(), j.dump(2));
    return p;
  }

  static json toy(const std::string& algorithm, json settings) {
    return json{{"schema", 1},
                {"simulator", {{"name", "gaussian_toy"}}},
                {"algorithm", {{"name", algorithm}, {"settings", std::move(settings)}}},
                {"seed", 3},
                {"observation", {1.0}},
                {"theta_true", {1.0}}};
  }

  std::string file(const fs::path& p) const { return lfi::io::read_file(p.string()); }

  fs::path dir_;
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(Cli, RunWritesAllOutputsAndManifest) {
  const fs::path out = dir_ / "rej";
  const Outcome o = run("run --config " + (configs / "toy_rejection.json").string() + " --out " + out.string());
  ASSERT_EQ(o.code, 0) << o.err;
  for (const char* f : {"posterior.csv", "traces.jsonl", "metrics.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_FALSE(fs::exists(out / "manifest.json.tmp"));

  const json manifest = json::parse(file(out / "manifest.json"));
  EXPECT_EQ(manifest["config_hash"], lfi::io::fnv1a_hex(file(configs / "toy_rejection.json")));
  EXPECT_EQ(manifest["seed"], 1);
  for (const auto& entry : manifest["files"]) {
    const std::string body = file(out / entry["name"].get<std::string>());
    EXPECT_EQ(entry["bytes"], body.size());
    EXPECT_EQ(entry["fnv1a"], lfi::io::fnv1a_hex(body));
  }
  const json metrics = json::parse(file(out / "metrics.json"));
  EXPECT_GE(metrics["n_simulations"].get<std::size_t>(), 2000u);
  EXPECT_TRUE(metrics["neg_log_true_params"].is_number());
  EXPECT_TRUE(metrics["wall_clock_seconds"].is_number());

  const std::string csv = file(out / "posterior.csv");
  EXPECT_EQ(csv.rfind("theta_1\n", 0), 0u);
  EXPECT_EQ(count_lines(csv), 2001u);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  EXPECT_EQ(count_lines(file(out / "traces.jsonl")), 1u);
}

TEST_F(Cli, WeightedPopulationsCarryAWeightColumn) {
  const fs::path cfg = write_config("smc.json", toy("smc-abc", {{"schedule", {2.0, 1.0}}, {"population", 200}}));
  const Outcome o = run("run --config " + cfg.string() + " --out " + (dir_ / "o").string());
  ASSERT_EQ(o.code, 0) << o.err;
  const std::string csv = file(dir_ / "o" / "posterior.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "theta_1,weight");
  EXPECT_EQ(count_lines(file(dir_ / "o" / "traces.jsonl")), 2u);
}

TEST_F(Cli, SameSeedGivesByteIdenticalOutputs) {
  const std::string cfg = (configs / "toy_snl.json").string();
  ASSERT_EQ(run("run --config " + cfg + " --out " + (dir_ / "a").string()).code, 0);
  ASSERT_EQ(run("run --config " + cfg + " --out " + (dir_ / "b").string()).code, 0);
  EXPECT_EQ(file(dir_ / "a" / "posterior.csv"), file(dir_ / "b" / "posterior.csv"));
  EXPECT_EQ(file(dir_ / "a" / "traces.jsonl"), file(dir_ / "b" / "traces.jsonl"));
  ASSERT_EQ(run("run --config " + cfg + " --seed 8 --out " + (dir_ / "c").string()).code, 0);
  EXPECT_NE(file(dir_ / "a" / "posterior.csv"), file(dir_ / "c" / "posterior.csv"));
  EXPECT_EQ(json::parse(file(dir_ / "c" / "manifest.json"))["seed"], 8);
}

TEST_F(Cli, OutputDirectoryFromConfig) {
  json j = toy("rejection", {{"tolerance", 1.0}, {"n_accept", 50}});
  j["output_dir"] = (dir_ / "from_config").string();
  ASSERT_EQ(run("run --config " + write_config("c.json", j).string()).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "from_config" / "manifest.json"));
}

TEST_F(Cli, ValidationErrorsExitTwoWithOneTaggedLine) {
  struct Case {
    json config;
    std::string tag;
  };
  json unknown_sim = toy("rejection", json::object());
  unknown_sim["simulator"]["name"] = "brownian";
  json unknown_alg = toy("rejection", json::object());
  unknown_alg["algorithm"]["name"] = "vi";
  json no_seed = toy("rejection", json::object());
  no_seed.erase("seed");
  json negative_seed = toy("rejection", json::object());
  negative_seed["seed"] = -1;
  json bad_schema = toy("rejection", json::object());
  bad_schema["schema"] = 2;
  json no_obs = toy("rejection", json::object());
  no_obs.erase("observation");
  no_obs.erase("theta_true");
  json wrong_obs = toy("rejection", json::object());
  wrong_obs["observation"] = {1.0, 2.0};
  const std::vector<Case> cases{
      {unknown_sim, "E_CONFIG_SIMULATOR"},
      {unknown_alg, "E_CONFIG_ALGORITHM"},
      {no_seed, "E_CONFIG_SEED"},
      {negative_seed, "E_CONFIG_SEED"},
      {bad_schema, "E_CONFIG_SCHEMA"},
      {no_obs, "E_CONFIG_OBSERVATION"},
      {wrong_obs, "E_CONFIG_OBSERVATION"},
      {toy("rejection", {{"tolerence", 0.5}}), "E_CONFIG_ALGORITHM"},
      {toy("snpe-a", {{"rounds", 0}}), "E_CONFIG_ALGORITHM"},
      {toy("smc-abc", {{"schedule", {1.0, 2.0}}}), "E_CONFIG_SCHEDULE"},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const fs::path cfg = write_config("bad" + std::to_string(i) + ".json", cases[i].config);
    const Outcome o = run("run --config " + cfg.string() + " --out " + (dir_ / "o").string());
    EXPECT_EQ(o.code, 2) << cases[i].tag << ": " << o.err;
    EXPECT_EQ(o.err.rfind("error: " + cases[i].tag + ":", 0), 0u) << o.err;
    EXPECT_EQ(count_lines(o.err), 1u) << o.err;
  }
}

TEST_F(Cli, UnparsableConfigAndUsage) {
  const fs::path p = dir_ / "broken.json";
  lfi::io::write_file(p.string(), "{\"schema\": 1,");
  Outcome o = run("run --config " + p.string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("E_CONFIG_PARSE"), std::string::npos);
  o = run("run --config " + (dir_ / "missing.json").string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("E_CONFIG_PARSE"), std::string::npos);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  json j = toy("rejection", json::object());
  EXPECT_EQ(run("run --config " + write_config("noout.json", j).string()).code, 2);
}

TEST_F(Cli, RuntimeFailureExitsThree) {
  const fs::path cfg =
      write_config("budget.json", toy("rejection", {{"tolerance", 0.0}, {"n_accept", 10}, {"max_simulations", 100}}));
  const Outcome o = run("run --config " + cfg.string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(o.code, 3);
  EXPECT_EQ(o.err.rfind("error: E_BUDGET:", 0), 0u) << o.err;
  EXPECT_FALSE(fs::exists(dir_ / "o" / "manifest.json"));
}

TEST_F(Cli, SnpeAEarlyTerminationExitsFourAndWritesResults) {
  const fs::path out = dir_ / "fail";
  const Outcome o = run("run --config " + (configs / "toy_snpe_a_failure.json").string() + " --out " + out.string());
  EXPECT_EQ(o.code, 4);
  EXPECT_EQ(o.err.rfind("error: E_EARLY_TERMINATION:", 0), 0u) << o.err;
  const json metrics = json::parse(file(out / "metrics.json"));
  EXPECT_TRUE(metrics["terminated_early"].get<bool>());
  EXPECT_EQ(metrics["n_rounds"], 2);
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
  // the written posterior is the round-1 estimate
  const std::string traces = file(out / "traces.jsonl");
  ASSERT_EQ(count_lines(traces), 2u);
  const json r1 = json::parse(traces.substr(0, traces.find('\n')));
  const json r2 = json::parse(traces.substr(traces.find('\n') + 1));
  EXPECT_EQ(r1["posterior_mean"], r2["posterior_mean"]);
  EXPECT_EQ(r2["diagnostics"]["correction_failed"], 1.0);
  EXPECT_EQ(count_lines(file(out / "posterior.csv")), 1001u);
}

TEST_F(Cli, BenchCollectsOneRowPerRoundAndSeed) {
  const fs::path csv = dir_ / "curves.csv";
  const Outcome o = run("bench --configs " + (configs / "bench").string() + " --out " + csv.string());
  ASSERT_EQ(o.code, 0) << o.err;
  const std::string body = file(csv);
  EXPECT_EQ(body.substr(0, body.find('\n')), "algorithm,seed,cumulative_sims,neg_log_true_params");
  // rejection: 1 round × 3 seeds; snl: 3 rounds × 3 seeds
  EXPECT_EQ(count_lines(body), 1u + 3u + 9u);
  EXPECT_NE(body.find("\nrejection,"), std::string::npos);
  EXPECT_NE(body.find("\nsnl,2,600,"), std::string::npos);
}

TEST_F(Cli, BenchSingleConfigIsOneCurve) {
  fs::create_directories(dir_ / "one");
  json j = toy("snpe-b", {{"rounds", 2}, {"simulations_per_round", 100}});
  lfi::io::write_file((dir_ / "one" / "x.json").string(), j.dump());
  ASSERT_EQ(run("bench --configs " + (dir_ / "one").string()).code, 0);
  const std::string body = file(dir_ / "one" / "curves.csv");
  EXPECT_EQ(count_lines(body), 3u);
  EXPECT_NE(body.find("snpe-b,3,100,"), std::string::npos);
  EXPECT_NE(body.find("snpe-b,3,200,"), std::string::npos);
}

TEST_F(Cli, BenchRejectsMismatchedSimulators) {
  fs::create_directories(dir_ / "mixed");
  json a = toy("rejection", json::object());
  json b = toy("rejection", json::object());
  b["simulator"] = {{"name", "gaussian_toy"}, {"settings", {{"noise_variance", 2.0}}}};
  lfi::io::write_file((dir_ / "mixed" / "a.json").string(), a.dump());
  lfi::io::write_file((dir_ / "mixed" / "b.json").string(), b.dump());
  const Outcome o = run("bench --configs " + (dir_ / "mixed").string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("E_CONFIG_BENCH"), std::string::npos);
}

TEST_F(Cli, SelftestPasses) {
  const Outcome o = run("selftest");
  EXPECT_EQ(o.code, 0) << o.out;
  EXPECT_EQ(o.out.find("FAIL"), std::string::npos) << o.out;
}

TEST_F(Cli, ShippedConfigsValidate) {
  for (const auto& e : fs::directory_iterator(configs)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(lfi::load_config(e.path().string())) << e.path();
  }
}
