#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "floodda/assimilation.hpp"
#include "floodda/cycling.hpp"
#include "floodda/forcing.hpp"
#include "floodda/hydro.hpp"
#include "floodda/observations.hpp"
#include "floodda/scenario.hpp"

namespace floodda::experiment {

inline constexpr int kConfigSchemaVersion = 1;

/// Truth controls of the default twin.
inline ControlVector default_truth() {
  ControlVector c;
  c.friction.ks = {15.0, 35.0, 32.0, 30.0, 34.0, 28.0, 31.0};
  c.mu = 1.0;
  return c;
}

/// Cycle chain of the default twin: first present time at 21 h so the first
/// spin-up starts at the beginning of the event, 25 cycles (last overpass at 150 h).
inline cycling::CycleSchedule default_schedule() {
  cycling::CycleSchedule s;
  s.t0_first = 21.0 * 3600.0;
  s.n_cycles = 25;
  return s;
}

/// Everything a truth/run/forecast invocation needs. Times are seconds;
/// the JSON document uses hours where the field name says so.
struct ExperimentConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  cycling::Mode mode = cycling::Mode::IGDA;
  char forcing_source = 'C';                       // 'V' observed, 'C' biased
  std::optional<forcing::Strategy> strategy;       // forecast strategy, none by default

  hydro::GeometryParams geometry;
  std::vector<scenario::SubdomainLayout> layout = scenario::default_layout();
  std::vector<std::filesystem::path> dem_paths;    // empty: synthetic DEMs
  double weir_fraction = 0.2;
  hydro::ModelParams model;

  ControlVector truth = default_truth();
  /// Stage correction applied to the truth at every overpass.
  std::array<double, kSubdomainCount> truth_delta_h{-0.3, -0.3, -0.3, -0.3, -0.3};

  assim::PriorSpec prior = assim::default_prior();
  std::size_t members = 75;
  double spread_floor = 0.5;
  bool anamorphosis = true;

  cycling::CycleSchedule schedule = default_schedule();

  obs::ObsErrorModel errors;
  std::vector<double> overpass_times{54 * 3600.0, 78 * 3600.0, 102 * 3600.0, 126 * 3600.0,
                                     150 * 3600.0};
  std::size_t hwm_count = 178;
  double hwm_variance = 0.1;
  std::filesystem::path observations_dir = "truth";
  std::uint64_t truth_seed = 7;

  std::optional<std::filesystem::path> observed_csv;  // replaces the synthetic event
  forcing::EventShape event;
  forcing::BiasModel bias;

  std::vector<double> issue_times;
  std::vector<double> leads{0.0, 21600.0, 43200.0, 64800.0, 86400.0, 108000.0, 129600.0};
  std::optional<std::pair<double, double>> score_period;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  cycling::Settings settings() const;
  void validate() const;
};

/// Parses a JSON document; errors name the offending line or field.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Example document describing the default twin (DEM paths under dems/).
std::string example_config_text();

hydro::HydroModel build_model(const ExperimentConfig& cfg);
forcing::Hydrograph observed_hydrograph(const ExperimentConfig& cfg);

/// Experiment label, e.g. "IGDA^C" or "IGDA^V/VQ".
std::string experiment_name(const ExperimentConfig& cfg);

/// Observation dataset and forcing pair written by cmd_truth.
struct Inputs {
  obs::Dataset data;
  forcing::Hydrograph observed;
  forcing::Hydrograph biased;
};

struct TruthResult {
  hydro::Trajectory trajectory;
  Inputs inputs;
};

TruthResult make_truth(const ExperimentConfig& cfg, const hydro::HydroModel& model);
Inputs load_inputs(const ExperimentConfig& cfg, const hydro::HydroModel& model);

/// Cycle chain in memory. Forecasts are issued at every configured issue time
/// when `with_forecasts` and a strategy is set.
cycling::ChainResult run_chain(const ExperimentConfig& cfg, const hydro::HydroModel& model,
                               const Inputs& inputs, bool with_forecasts);

void cmd_truth(const ExperimentConfig& cfg);
void cmd_run(const ExperimentConfig& cfg);
void cmd_forecast(const ExperimentConfig& cfg);
/// Recomputes every score from the run directories; writes scores.json,
/// table.csv and contingency rasters under `out_dir`.
void cmd_metrics(const std::vector<std::filesystem::path>& run_dirs,
                 const std::filesystem::path& out_dir);
/// Writes config.json and the synthetic DEMs into `dir`.
void cmd_init(const std::filesystem::path& dir);

}  // namespace floodda::experiment
