#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "regcalc/experiments.hpp"

using namespace regcalc::cli;

namespace {

json small_hedge() {
  return json{{"kind", "hedge-european"},
              {"seed", 7},
              {"params", {{"pde_time", 50}, {"pde_space", 80}, {"n_log2", 8}, {"n_paths", 4}}}};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Kinds, StableOrder) {
  const auto& kinds = experiment_kinds();
  ASSERT_EQ(kinds.size(), 8u);
  const char* expected[] = {"qv-sweep", "ito-check", "hedge-european", "hedge-asian",
                            "amartingale", "weakbm", "insider-utility", "gateaux"};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(kinds[i].name, expected[i]);
  const std::string listing = list_experiments();
  EXPECT_LT(listing.find("qv-sweep"), listing.find("gateaux"));
  EXPECT_EQ(listing, list_experiments());
}

TEST(ParseConfig, FillsDefaults) {
  const ExperimentConfig cfg = parse_config(json{{"kind", "weakbm"}});
  EXPECT_EQ(cfg.seed, kDefaultSeed);
  EXPECT_EQ(cfg.output_dir, "regcalc-out/weakbm");
  EXPECT_EQ(cfg.params, find_kind("weakbm").defaults);
}

TEST(ParseConfig, OverridesAndSeed) {
  const ExperimentConfig cfg = parse_config(small_hedge(), 99);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.params["n_paths"], 4);
  EXPECT_EQ(cfg.params["strike"], 100.0);
  EXPECT_EQ(parse_config(small_hedge()).seed, 7u);
}

TEST(ParseConfig, Rejections) {
  EXPECT_THROW(parse_config(json::array()), ConfigError);
  EXPECT_THROW(parse_config(json{{"kind", "nope"}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"seed", 1}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"kind", "weakbm"}, {"extra", 1}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"kind", "weakbm"}, {"params", {{"bogus", 1}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"kind", "weakbm"}, {"params", {{"n_paths", "many"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"kind", "weakbm"}, {"params", {{"n_paths", 10.5}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"kind", "weakbm"}, {"params", {{"ks_times", {"a"}}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"kind", "weakbm"}, {"seed", -3}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"kind", "weakbm"}, {"output_dir", 3}}), ConfigError);
  EXPECT_NO_THROW(parse_config(json{{"kind", "weakbm"}, {"params", {{"qv_tolerance", 1}}}}));
}

TEST(ParseConfig, SeedFromEnvironment) {
  ::setenv("REGCALC_SEED", "123", 1);
  EXPECT_EQ(seed_from_environment(), 123u);
  ::setenv("REGCALC_SEED", "12x", 1);
  EXPECT_THROW(seed_from_environment(), ConfigError);
  ::setenv("REGCALC_SEED", "-1", 1);
  EXPECT_THROW(seed_from_environment(), ConfigError);
  ::unsetenv("REGCALC_SEED");
  EXPECT_FALSE(seed_from_environment().has_value());
}

TEST(ConfigHash, SensitiveToComputationOnly) {
  const ExperimentConfig a = parse_config(small_hedge());
  ExperimentConfig b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.seed += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  b = a;
  b.params["m"] = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  b = a;
  b.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
}

TEST(RunExperiment, BadValuesAreConfigErrors) {
  json doc = small_hedge();
  doc["params"]["strike"] = -1.0;
  EXPECT_THROW(run_experiment(parse_config(doc)), ConfigError);
  doc = small_hedge();
  doc["params"]["m"] = 100000;
  EXPECT_THROW(run_experiment(parse_config(doc)), ConfigError);
  EXPECT_THROW(run_experiment(parse_config(json{{"kind", "qv-sweep"}, {"params", {{"process", "levy"}}}})),
               ConfigError);
  EXPECT_THROW(run_experiment(parse_config(json{{"kind", "amartingale"}, {"params", {{"n_paths", 10}}}})),
               ConfigError);
}

TEST(RunExperiment, Deterministic) {
  for (const auto& cfg : selftest_configs(5)) {
    if (cfg.kind == "qv-sweep" || cfg.kind == "ito-check") continue;
    const RunResult a = run_experiment(cfg), b = run_experiment(cfg);
    ASSERT_EQ(a.csvs.size(), b.csvs.size()) << cfg.kind;
    for (std::size_t i = 0; i < a.csvs.size(); ++i) EXPECT_EQ(a.csvs[i].body, b.csvs[i].body) << cfg.kind;
    EXPECT_FALSE(a.checks.empty()) << cfg.kind;
  }
}

TEST(RunExperiment, SeedChangesOutput) {
  const RunResult a = run_experiment(parse_config(small_hedge(), 1));
  const RunResult b = run_experiment(parse_config(small_hedge(), 2));
  EXPECT_NE(a.csvs[0].body, b.csvs[0].body);
}

TEST(Artifacts, LayoutAndPreamble) {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "regcalc-test-artifacts";
  std::filesystem::remove_all(dir);
  json doc = small_hedge();
  doc["params"]["export_surface"] = true;
  const ExperimentConfig cfg = parse_config(doc);
  const RunResult r = run_experiment(cfg);
  write_artifacts(cfg, r, dir);
  EXPECT_EQ(json::parse(slurp(dir / "config.resolved.json")), cfg.resolved());
  const std::string preamble = "# regcalc " + std::string(REGCALC_VERSION) + " config " + config_hash(cfg) + "\n";
  for (const char* f : {"hedge_ensemble.csv", "surface.csv"}) {
    const std::string body = slurp(dir / f);
    EXPECT_EQ(body.rfind(preamble, 0), 0u) << f;
  }
  const std::string summary = slurp(dir / "summary.txt");
  EXPECT_NE(summary.find("price-vs-closed-form"), std::string::npos);
  EXPECT_EQ(summary.find("PASS") != std::string::npos || summary.find("FAIL") != std::string::npos, true);
  std::filesystem::remove_all(dir);
}

TEST(Summary, OneLinePerCheck) {
  RunResult r;
  r.checks.push_back({"a", true, "1", "< 2", "independent oracle"});
  r.checks.push_back({"b", false, "3", "< 2", "by construction"});
  const std::string s = summary_text(parse_config(json{{"kind", "weakbm"}}), r);
  EXPECT_NE(s.find("PASS a: 1 (tolerance < 2; independent oracle)\n"), std::string::npos);
  EXPECT_NE(s.find("FAIL b: 3 (tolerance < 2; by construction)\n"), std::string::npos);
  EXPECT_NE(s.find("some checks failed"), std::string::npos);
}
