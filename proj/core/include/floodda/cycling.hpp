#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "floodda/assimilation.hpp"
#include "floodda/forcing.hpp"
#include "floodda/hydro.hpp"
#include "floodda/observations.hpp"

namespace floodda::cycling {

/// Present times T0_c = t0_first + c * cycle_spacing. Cycle c assimilates
/// (T0_c - window_length, T0_c]; its reanalysis segment is the first
/// reanalysis_length of that window.
struct CycleSchedule {
  double t0_first = 0.0;
  double cycle_spacing = 21600.0;
  double window_length = 64800.0;
  double reanalysis_length = 21600.0;
  double spin_up = 10800.0;
  double forecast_horizon = 129600.0;
  std::size_t n_cycles = 1;

  double t0(std::size_t c) const { return t0_first + static_cast<double>(c) * cycle_spacing; }
  double window_start(std::size_t c) const { return t0(c) - window_length; }
  double run_start(std::size_t c) const { return window_start(c) - spin_up; }
  double segment_end(std::size_t c) const { return window_start(c) + reanalysis_length; }
  /// Instant at which cycle c hands its states to cycle c + 1.
  double restart_time(std::size_t c) const { return run_start(c + 1); }
  /// End of the analysis re-run of cycle c.
  double analysis_end(std::size_t c) const;
  /// Sub-window starts of the nested forecast analyses: T0 - {18, 12, 6} h.
  std::vector<double> nested_starts(std::size_t c) const;

  void validate() const;
};

enum class Mode { OL, IDA, IGDA };
Mode parse_mode(const std::string& s);
std::string to_string(Mode m);

struct Settings {
  CycleSchedule schedule;
  Mode mode = Mode::IGDA;
  std::size_t n_members = 75;
  assim::PriorSpec prior = assim::default_prior();
  obs::ObsErrorModel errors;
  /// Lower bound on the cross-cycle prior spread, as a fraction of prior std.
  double spread_floor = 0.5;
  bool use_anamorphosis = true;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

/// Member controls and states carried from one cycle to the next.
struct EnsembleState {
  std::vector<ControlVector> analysis;        // empty before the first cycle
  std::vector<hydro::HydroState> restart;     // one per member at restart_time
};

struct SegmentSample {
  double time = 0.0;
  std::vector<double> wl;      // ensemble-mean water level per station
  std::vector<double> stage;   // ensemble-mean stage per subdomain
};

struct OverpassSample {
  double time = 0.0;
  std::vector<double> wsr;     // ensemble-mean WSR per subdomain
  std::vector<double> stage;   // ensemble-mean stage per subdomain
};

struct CycleResult {
  std::size_t cycle = 0;
  double t0 = 0.0;
  std::vector<ControlVector> background;
  std::vector<ControlVector> analysis;
  std::array<assim::ElementStats, kControlSize> stats{};
  std::size_t n_obs = 0;
  std::size_t n_wsr = 0;
  bool delta_h_active = false;
  std::size_t replaced = 0;
  std::vector<hydro::HydroState> initial;        // member states at run_start
  std::vector<hydro::Trajectory> analysis_runs;  // [run_start, analysis_end]
  std::vector<SegmentSample> segment;            // samples in [window_start, segment_end]
  std::vector<OverpassSample> overpasses;        // overpasses inside the segment
  std::vector<hydro::HydroState> restart;        // member states at restart_time
  std::vector<double> cell_max;                  // per cell max of mean WL over the segment
  std::vector<double> stage_max;                 // per subdomain max of mean stage
};

/// Initial ensemble state: every member at the cold-start state.
EnsembleState cold_start(const hydro::HydroModel& model, const Settings& settings,
                         const forcing::Hydrograph& forcing);

/// Background controls of cycle c: prior draw for c = 0, otherwise a redraw
/// around the previous analysis mean with spread max(analysis std,
/// spread_floor * prior std). Stage corrections are drawn from the prior when
/// `delta_h_active`, else fixed at zero.
std::vector<ControlVector> background_controls(const Settings& settings, std::size_t c,
                                               const EnsembleState& state, bool delta_h_active);

/// One reanalysis cycle; updates `state` for the next cycle.
CycleResult run_reanalysis_cycle(std::size_t c, EnsembleState& state, const hydro::HydroModel& model,
                                 const obs::Dataset& data, const forcing::Hydrograph& forcing,
                                 const Settings& settings);

struct ForecastResult {
  double issue_time = 0.0;
  std::vector<ControlVector> controls;           // final nested-analysis controls
  std::vector<hydro::HydroState> initial;        // member states at the issue time
  std::vector<hydro::Trajectory> members;        // [T0, T0 + horizon]
  std::vector<double> times;
  std::vector<std::vector<double>> mean_wl;      // [station][time]
  std::vector<std::vector<double>> mean_wsr;     // [subdomain][time]
  std::vector<std::vector<double>> mean_stage;   // [subdomain][time]
  std::vector<std::size_t> nested_n_obs;         // observations of the 18/12/6 h analyses
  forcing::Hydrograph forcing;                   // forecast-phase inflow before mu
};

/// Nested 12 h and 6 h analyses after cycle `cr`, then the ensemble forecast
/// driven by `forecast_forcing` from the issue time.
ForecastResult run_forecast_cycle(const CycleResult& cr, const hydro::HydroModel& model,
                                  const obs::Dataset& data,
                                  const forcing::Hydrograph& reanalysis_forcing,
                                  const forcing::Hydrograph& forecast_forcing,
                                  const Settings& settings);

struct LeadSeries {
  std::vector<double> valid_times;
  std::vector<double> values;
};

/// Ensemble-mean value at issue + lead for every forecast.
LeadSeries extract_leadtime_series(const std::vector<ForecastResult>& forecasts, double lead,
                                   std::size_t station, double horizon);

/// Whole chain of cycles with the per-cycle results kept in order.
struct ChainResult {
  std::vector<CycleResult> cycles;
  std::vector<ForecastResult> forecasts;
};

/// Station water level along the concatenated reanalysis segments, every
/// join written once: {times, values}.
std::pair<std::vector<double>, std::vector<double>> reanalysis_series(
    const std::vector<CycleResult>& cycles, std::size_t station);

/// Ensemble restart: the member states as consecutive restart records.
void write_ensemble_restart(const std::filesystem::path& path,
                            const std::vector<hydro::HydroState>& states);
std::vector<hydro::HydroState> read_ensemble_restart(const std::filesystem::path& path);

/// Writes cycles/c####/{analysis.csv,restart.bin}.
void write_cycle(const std::filesystem::path& run_dir, const CycleResult& cr);
/// Writes reanalysis/wl_<station>.csv, overpass WSR/extent and maxima.
void write_reanalysis(const std::filesystem::path& run_dir, const hydro::HydroModel& model,
                      const std::vector<CycleResult>& cycles);
/// Writes forecasts/issue_<t>/{member###.csv,mean_<station>.csv,forcing.csv}.
void write_forecast(const std::filesystem::path& run_dir, const hydro::HydroModel& model,
                    const ForecastResult& fr);

}  // namespace floodda::cycling
