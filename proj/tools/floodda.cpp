// floodda: twin-experiment runner (truth, run, forecast, metrics, init).

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "floodda/error.hpp"
#include "floodda/experiment.hpp"

namespace fs = std::filesystem;
using namespace floodda;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kModel = 3, kMissing = 4 };

struct Overrides {
  std::string config;
  std::optional<std::string> mode, forcing, strategy, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, Overrides& o, bool experiment_flags) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--threads", o.threads, "worker threads (members)")->check(CLI::PositiveNumber);
  if (!experiment_flags) return;
  cmd->add_option("--mode", o.mode, "OL, IDA or IGDA")->check(CLI::IsMember({"OL", "IDA", "IGDA"}));
  cmd->add_option("--forcing", o.forcing, "reanalysis forcing: V observed, C biased")
      ->check(CLI::IsMember({"V", "C"}));
  cmd->add_option("--strategy", o.strategy, "forecast strategy")->check(CLI::IsMember({"CC", "VC", "VQ"}));
}

experiment::ExperimentConfig configure(const Overrides& o) {
  auto cfg = experiment::load_config(o.config);
  if (o.mode) cfg.mode = cycling::parse_mode(*o.mode);
  if (o.strategy) {
    cfg.strategy = forcing::parse_strategy(*o.strategy);
    // The strategy fixes the reanalysis forcing unless given explicitly.
    if (!o.forcing) cfg.forcing_source = *o.strategy == "CC" ? 'C' : 'V';
  }
  if (o.forcing) cfg.forcing_source = (*o.forcing)[0];
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  if (o.out) cfg.output_dir = fs::absolute(*o.out);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cycled ensemble data assimilation twin experiments on a surrogate hydraulic model"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  Overrides truth_o, run_o, fc_o, metrics_o;
  auto* truth = app.add_subcommand("truth", "simulate the truth and write synthetic observations");
  add_common(truth, truth_o, false);
  auto* run = app.add_subcommand("run", "cycled reanalysis in the configured mode, then scores");
  add_common(run, run_o, true);
  auto* fc = app.add_subcommand("forecast", "reanalysis chain with forecasts at the issue times");
  add_common(fc, fc_o, true);

  std::vector<std::string> run_dirs;
  std::string metrics_out;
  auto* metrics = app.add_subcommand("metrics", "recompute scores from run directories");
  metrics->add_option("runs", run_dirs, "run directories")->required()->check(CLI::ExistingDirectory);
  metrics->add_option("--out", metrics_out, "where scores.json and table.csv go (default: first run)");

  std::string init_dir;
  auto* init = app.add_subcommand("init", "write an example config and synthetic DEMs");
  init->add_option("dir", init_dir, "target directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*truth) {
      experiment::cmd_truth(configure(truth_o));
    } else if (*run) {
      experiment::cmd_run(configure(run_o));
    } else if (*fc) {
      experiment::cmd_forecast(configure(fc_o));
    } else if (*metrics) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      experiment::cmd_metrics(dirs, metrics_out.empty() ? dirs.front() : fs::path(metrics_out));
    } else if (*init) {
      experiment::cmd_init(init_dir);
    }
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const MissingInputError& e) {
    spdlog::error("missing input: {}", e.what());
    return kMissing;
  } catch (const ModelError& e) {
    spdlog::error("model: {}", e.what());
    return kModel;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kModel;
  }
  return kOk;
}
