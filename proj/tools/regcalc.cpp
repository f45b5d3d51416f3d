// regcalc: experiment runner for the regularization calculus library.
//
//   regcalc run <config.json> [--threads N] [--output DIR]
//   regcalc list
//   regcalc selftest [--threads N] [--output DIR]
//
// REGCALC_SEED overrides the seed of every config.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "regcalc/experiments.hpp"

namespace {

using namespace regcalc::cli;

int run_command(const std::string& config_path, const std::string& output_override) {
  ExperimentConfig cfg;
  RunResult result;
  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open " + config_path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    cfg = parse_config(doc, seed_from_environment());
    if (!output_override.empty()) cfg.output_dir = output_override;
    result = run_experiment(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "regcalc: config error: " << e.what() << '\n';
    return kExitConfigError;
  }
  write_artifacts(cfg, result, cfg.output_dir);
  std::cout << summary_text(cfg, result);
  return result.all_pass() ? kExitOk : kExitCheckFailed;
}

// Runs every kind at reduced size twice and compares the CSV bodies; the
// first run's artifacts are written under the output directory.
int selftest_command(const std::string& output_dir) {
  std::optional<std::uint64_t> seed;
  try {
    seed = seed_from_environment();
  } catch (const ConfigError& e) {
    std::cerr << "regcalc: config error: " << e.what() << '\n';
    return kExitConfigError;
  }
  bool deterministic = true;
  std::size_t failed_checks = 0;
  for (ExperimentConfig cfg : selftest_configs(seed.value_or(kDefaultSeed))) {
    cfg.output_dir = (std::filesystem::path(output_dir) / cfg.kind).string();
    const RunResult first = run_experiment(cfg);
    const RunResult second = run_experiment(cfg);
    bool same = first.csvs.size() == second.csvs.size();
    for (std::size_t i = 0; same && i < first.csvs.size(); ++i)
      same = first.csvs[i].file == second.csvs[i].file && first.csvs[i].body == second.csvs[i].body;
    deterministic = deterministic && same;
    for (const auto& c : first.checks) failed_checks += c.pass ? 0 : 1;
    write_artifacts(cfg, first, cfg.output_dir);
    std::cout << (same ? "PASS " : "FAIL ") << "deterministic " << cfg.kind << '\n';
  }
  // Reduced sizes make the statistical checks informative only.
  std::cout << "reduced-size checks failing: " << failed_checks << " (not gating)\n";
  return deterministic ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regcalc: stochastic calculus via regularization, experiment runner"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", REGCALC_VERSION);
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (0: all cores)");

  std::string config_path, output;
  auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--output", output, "output directory (overrides the config)");

  app.add_subcommand("list", "list experiment kinds and their defaults");

  std::string selftest_dir = "regcalc-selftest";
  auto* selftest = app.add_subcommand("selftest", "reduced-size run of every kind, checked for determinism");
  selftest->add_option("--output", selftest_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }
  regcalc::set_worker_count(threads);

  try {
    if (app.got_subcommand("list")) {
      std::cout << list_experiments();
      return kExitOk;
    }
    if (app.got_subcommand("run")) return run_command(config_path, output);
    return selftest_command(selftest_dir);
  } catch (const std::exception& e) {
    std::cerr << "regcalc: " << e.what() << '\n';
    return kExitCheckFailed;
  }
}
