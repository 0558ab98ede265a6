#include "floodda/cycling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "floodda/csv.hpp"
#include "floodda/error.hpp"

namespace floodda::cycling {

namespace {

constexpr std::size_t kDeltaHOffset = kFrictionCount + 1;

std::vector<double> overpasses_in(const obs::Dataset& data, double t_a, double t_b) {
  std::vector<double> out;
  for (double t : data.overpasses.times())
    if (t > t_a && t <= t_b) out.push_back(t);
  return out;
}

void zero_delta_h(std::vector<ControlVector>& controls) {
  for (auto& c : controls) c.delta_h.fill(0.0);
}

std::vector<hydro::HydroState> states_at(const std::vector<hydro::Trajectory>& runs, double t) {
  std::vector<hydro::HydroState> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(r.at(t));
  return out;
}

assim::PropagationOptions propagation_options(const Settings& s, std::uint64_t stream) {
  assim::PropagationOptions o;
  o.threads = s.threads;
  o.seed = s.seed;
  o.stream = stream;
  o.replacement_prior = s.mode == Mode::OL ? nullptr : &s.prior;
  return o;
}

std::vector<hydro::Trajectory> take_trajectories(assim::Propagation& p) {
  std::vector<hydro::Trajectory> out;
  out.reserve(p.members.size());
  for (auto& m : p.members) out.push_back(std::move(m.trajectory));
  return out;
}

std::vector<obs::ObsVector> take_equivalents(const assim::Propagation& p) {
  std::vector<obs::ObsVector> out;
  out.reserve(p.members.size());
  for (const auto& m : p.members) out.push_back(m.equivalents);
  return out;
}

}  // namespace

double CycleSchedule::analysis_end(std::size_t c) const {
  return std::max(segment_end(c), restart_time(c));
}

std::vector<double> CycleSchedule::nested_starts(std::size_t c) const {
  const double t = t0(c);
  return {t - window_length, t - 2.0 * window_length / 3.0, t - window_length / 3.0};
}

void CycleSchedule::validate() const {
  if (!(window_length > 0.0) || !(reanalysis_length > 0.0) || !(cycle_spacing > 0.0))
    throw ConfigError("schedule: window, reanalysis and spacing must be > 0");
  if (reanalysis_length > window_length)
    throw ConfigError("schedule: reanalysis_length must not exceed window_length");
  if (!(spin_up >= 0.0)) throw ConfigError("schedule: spin_up must be >= 0");
  if (!(forecast_horizon >= 0.0)) throw ConfigError("schedule: forecast_horizon must be >= 0");
  if (n_cycles == 0) throw ConfigError("schedule: n_cycles must be >= 1");
  if (cycle_spacing > reanalysis_length)
    spdlog::warn("schedule: cycle spacing exceeds the reanalysis length; the reanalysis has gaps");
  if (cycle_spacing < reanalysis_length)
    spdlog::warn("schedule: cycle spacing below the reanalysis length; segments overlap");
}

Mode parse_mode(const std::string& s) {
  if (s == "OL") return Mode::OL;
  if (s == "IDA") return Mode::IDA;
  if (s == "IGDA") return Mode::IGDA;
  throw ConfigError("unknown mode '" + s + "' (expected OL, IDA or IGDA)");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::OL: return "OL";
    case Mode::IDA: return "IDA";
    case Mode::IGDA: return "IGDA";
  }
  return "?";
}

EnsembleState cold_start(const hydro::HydroModel& model, const Settings& settings,
                         const forcing::Hydrograph& forcing) {
  const double t = settings.schedule.run_start(0);
  const ControlVector mean = settings.prior.mean();
  const auto s0 = model.initial_state(mean.mu * forcing.at(t), mean.friction, t);
  EnsembleState st;
  st.restart.assign(settings.mode == Mode::OL ? 1 : settings.n_members, s0);
  return st;
}

std::vector<ControlVector> background_controls(const Settings& settings, std::size_t c,
                                               const EnsembleState& state, bool delta_h_active) {
  std::vector<ControlVector> out;
  if (settings.mode == Mode::OL) {
    out.push_back(settings.prior.mean());
  } else if (state.analysis.empty()) {
    out = assim::draw_ensemble(settings.prior, settings.n_members, settings.seed, c);
  } else {
    const auto an = assim::ensemble_stats(state.analysis);
    assim::PriorSpec p = settings.prior;
    for (std::size_t j = 0; j < kDeltaHOffset; ++j) {
      auto& e = p.elements[j];
      e.mean = std::clamp(an[j].analysis_mean, e.lower, e.upper);
      e.std = std::max(an[j].analysis_std, settings.spread_floor * settings.prior.elements[j].std);
    }
    out = assim::draw_ensemble(p, settings.n_members, settings.seed, c);
  }
  if (!delta_h_active) zero_delta_h(out);
  return out;
}

CycleResult run_reanalysis_cycle(std::size_t c, EnsembleState& state, const hydro::HydroModel& model,
                                 const obs::Dataset& data, const forcing::Hydrograph& forcing,
                                 const Settings& settings) {
  const auto& sched = settings.schedule;
  const double t0 = sched.t0(c);
  const double ws = sched.window_start(c);
  const double rs = sched.run_start(c);
  const std::size_t n = settings.mode == Mode::OL ? 1 : settings.n_members;
  if (state.restart.size() != n)
    throw MissingInputError(fmt::format("cycle {}: restart holds {} states, expected {}", c,
                                        state.restart.size(), n));
  for (const auto& s : state.restart)
    if (s.time != rs)
      throw MissingInputError(fmt::format("cycle {}: restart at t={} but the cycle starts at {}", c,
                                          s.time, rs));

  CycleResult cr;
  cr.cycle = c;
  cr.t0 = t0;
  cr.initial = state.restart;
  const obs::ObsVector y = settings.mode == Mode::OL
                               ? obs::ObsVector{}
                               : obs::window_slice(data, ws, t0, settings.errors, t0,
                                                   settings.mode == Mode::IGDA);
  cr.delta_h_active = settings.mode == Mode::IGDA && y.count(obs::Kind::WSR) > 0;
  const auto passes = overpasses_in(data, ws, t0);
  auto opts = propagation_options(settings, 3 * c);

  cr.background = background_controls(settings, c, state, cr.delta_h_active);
  std::vector<ControlVector> xa;
  if (settings.mode != Mode::OL && !y.empty()) {
    auto bg = assim::propagate_background(model, state.restart, cr.background, forcing,
                                          {rs, t0, passes, {}, true}, y, opts);
    cr.background = bg.controls;
    cr.replaced += bg.replaced;
    auto res = assim::analysis_update(bg.controls, take_equivalents(bg), y,
                                      settings.use_anamorphosis && settings.mode == Mode::IGDA,
                                      settings.seed, 3 * c);
    xa = std::move(res.controls);
    cr.stats = res.stats;
    cr.n_obs = res.n_obs;
    cr.n_wsr = res.n_wsr;
    spdlog::info("cycle {} T0={}h: {} obs ({} WSR), mu {:.3f} -> {:.3f}", c, t0 / 3600.0, res.n_obs,
                 res.n_wsr, res.stats[kFrictionCount].background_mean,
                 res.stats[kFrictionCount].analysis_mean);
  } else {
    if (settings.mode != Mode::OL)
      spdlog::info("cycle {} T0={}h: no observations in window, background passes through", c,
                   t0 / 3600.0);
    xa = cr.background;
    cr.stats = assim::ensemble_stats(xa);
  }

  // Analysis re-run: reanalysis segment, restart and nested-analysis start states.
  std::vector<double> extras{sched.restart_time(c), sched.segment_end(c)};
  for (double s : sched.nested_starts(c)) extras.push_back(s - sched.spin_up);
  auto ana = assim::propagate_analysis(model, state.restart, xa, forcing,
                                       {rs, sched.analysis_end(c), passes, extras, false},
                                       obs::ObsVector{}, opts);
  cr.replaced += ana.replaced;
  cr.analysis = ana.controls;
  cr.analysis_runs = take_trajectories(ana);

  const auto& geom = model.geometry();
  const std::size_t n_sub = model.n_subdomains();
  const double inv_n = 1.0 / static_cast<double>(n);
  cr.cell_max.assign(geom.n_cells(), -std::numeric_limits<double>::infinity());
  cr.stage_max.assign(n_sub, -std::numeric_limits<double>::infinity());
  const auto& grid = cr.analysis_runs.front().states;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double t = grid[k].time;
    if (t < ws || t > sched.segment_end(c)) continue;
    SegmentSample s;
    s.time = t;
    std::vector<double> depth(geom.n_cells(), 0.0);
    s.stage.assign(n_sub, 0.0);
    for (const auto& r : cr.analysis_runs) {
      for (std::size_t i = 0; i < depth.size(); ++i) depth[i] += r.states[k].depth[i];
      for (std::size_t m = 0; m < n_sub; ++m) s.stage[m] += r.states[k].stage[m];
    }
    for (auto& d : depth) d *= inv_n;
    for (auto& v : s.stage) v *= inv_n;
    for (const auto& st : geom.stations) s.wl.push_back(geom.bed[st.cell] + depth[st.cell]);
    for (std::size_t i = 0; i < depth.size(); ++i)
      cr.cell_max[i] = std::max(cr.cell_max[i], geom.bed[i] + depth[i]);
    for (std::size_t m = 0; m < n_sub; ++m) cr.stage_max[m] = std::max(cr.stage_max[m], s.stage[m]);
    cr.segment.push_back(std::move(s));
  }
  for (double t : overpasses_in(data, ws, sched.segment_end(c))) {
    OverpassSample o;
    o.time = t;
    o.wsr.assign(n_sub, 0.0);
    o.stage.assign(n_sub, 0.0);
    for (const auto& r : cr.analysis_runs) {
      const auto& st = r.at(t);
      for (std::size_t m = 0; m < n_sub; ++m) {
        o.wsr[m] += model.wsr(st, m) * inv_n;
        o.stage[m] += st.stage[m] * inv_n;
      }
    }
    cr.overpasses.push_back(std::move(o));
  }

  cr.restart = states_at(cr.analysis_runs, sched.restart_time(c));
  state.analysis = cr.analysis;
  state.restart = cr.restart;
  return cr;
}

ForecastResult run_forecast_cycle(const CycleResult& cr, const hydro::HydroModel& model,
                                  const obs::Dataset& data,
                                  const forcing::Hydrograph& reanalysis_forcing,
                                  const forcing::Hydrograph& forecast_forcing,
                                  const Settings& settings) {
  const auto& sched = settings.schedule;
  const std::size_t c = cr.cycle;
  const double t0 = cr.t0;
  const auto starts = sched.nested_starts(c);
  ForecastResult fr;
  fr.issue_time = t0;
  fr.nested_n_obs.push_back(cr.n_obs);

  std::vector<ControlVector> controls = cr.analysis;
  std::vector<hydro::Trajectory> runs = cr.analysis_runs;
  for (std::size_t k = 1; k < starts.size(); ++k) {
    const double ts = starts[k];
    const double tau = ts - sched.spin_up;
    const auto initial = states_at(runs, tau);
    const obs::ObsVector y = settings.mode == Mode::OL
                                 ? obs::ObsVector{}
                                 : obs::window_slice(data, ts, t0, settings.errors, t0,
                                                     settings.mode == Mode::IGDA);
    if (!(settings.mode == Mode::IGDA && y.count(obs::Kind::WSR) > 0)) zero_delta_h(controls);
    const auto passes = overpasses_in(data, ts, t0);
    auto opts = propagation_options(settings, 3 * c + k);
    if (settings.mode != Mode::OL && !y.empty()) {
      auto bg = assim::propagate_background(model, initial, controls, reanalysis_forcing,
                                            {tau, t0, passes, {}, true}, y, opts);
      auto res = assim::analysis_update(bg.controls, take_equivalents(bg), y,
                                        settings.use_anamorphosis && settings.mode == Mode::IGDA,
                                        settings.seed, 3 * c + k);
      controls = std::move(res.controls);
    }
    fr.nested_n_obs.push_back(y.size());
    const double end = k + 1 < starts.size() ? starts[k + 1] - sched.spin_up : t0;
    auto ana = assim::propagate_analysis(model, initial, controls, reanalysis_forcing,
                                         {tau, end, passes, {}, false}, obs::ObsVector{}, opts);
    controls = ana.controls;
    runs = take_trajectories(ana);
  }

  fr.controls = controls;
  fr.initial = states_at(runs, t0);
  fr.forcing = forecast_forcing;
  auto fc = assim::propagate(model, fr.initial, controls, forecast_forcing,
                             {t0, t0 + sched.forecast_horizon, {}, {}, true}, obs::ObsVector{},
                             propagation_options(settings, 3 * c + 2));
  fr.members = take_trajectories(fc);

  const auto& geom = model.geometry();
  const std::size_t n_sub = model.n_subdomains();
  const double inv_n = 1.0 / static_cast<double>(fr.members.size());
  const auto& grid = fr.members.front().states;
  fr.mean_wl.assign(geom.stations.size(), std::vector<double>(grid.size(), 0.0));
  fr.mean_wsr.assign(n_sub, std::vector<double>(grid.size(), 0.0));
  fr.mean_stage.assign(n_sub, std::vector<double>(grid.size(), 0.0));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    fr.times.push_back(grid[k].time);
    for (const auto& m : fr.members) {
      for (std::size_t s = 0; s < geom.stations.size(); ++s)
        fr.mean_wl[s][k] += model.water_level_at_cell(m.states[k], geom.stations[s].cell) * inv_n;
      for (std::size_t j = 0; j < n_sub; ++j) {
        fr.mean_wsr[j][k] += model.wsr(m.states[k], j) * inv_n;
        fr.mean_stage[j][k] += m.states[k].stage[j] * inv_n;
      }
    }
  }
  return fr;
}

LeadSeries extract_leadtime_series(const std::vector<ForecastResult>& forecasts, double lead,
                                   std::size_t station, double horizon) {
  if (lead < 0.0 || lead > horizon)
    throw std::invalid_argument(fmt::format("lead {} s outside [0, {}]", lead, horizon));
  LeadSeries out;
  for (const auto& f : forecasts) {
    const double t = f.issue_time + lead;
    const auto it = std::find(f.times.begin(), f.times.end(), t);
    if (it == f.times.end())
      throw std::invalid_argument(fmt::format("forecast issued at {} has no sample at {}", f.issue_time, t));
    out.valid_times.push_back(t);
    out.values.push_back(f.mean_wl.at(station)[static_cast<std::size_t>(it - f.times.begin())]);
  }
  return out;
}

void write_ensemble_restart(const std::filesystem::path& path,
                            const std::vector<hydro::HydroState>& states) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : states) {
    const auto bytes = hydro::serialize(s);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

std::vector<hydro::HydroState> read_ensemble_restart(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("missing restart " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  std::vector<hydro::HydroState> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 17) throw MissingInputError(path.string() + ": truncated restart");
    const auto u32 = [&](std::size_t at) {
      return static_cast<std::uint32_t>(bytes[at]) | static_cast<std::uint32_t>(bytes[at + 1]) << 8 |
             static_cast<std::uint32_t>(bytes[at + 2]) << 16 |
             static_cast<std::uint32_t>(bytes[at + 3]) << 24;
    };
    const std::size_t len = 17 + 8 * (1 + static_cast<std::size_t>(u32(pos + 9)) + u32(pos + 13));
    if (bytes.size() - pos < len) throw MissingInputError(path.string() + ": truncated restart");
    out.push_back(hydro::deserialize(std::span(bytes).subspan(pos, len)));
    pos += len;
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> reanalysis_series(
    const std::vector<CycleResult>& cycles, std::size_t station) {
  std::pair<std::vector<double>, std::vector<double>> out;
  for (std::size_t c = 0; c < cycles.size(); ++c)
    for (const auto& smp : cycles[c].segment) {
      // Segments share their end points.
      if (c > 0 && smp.time == cycles[c].segment.front().time) continue;
      out.first.push_back(smp.time);
      out.second.push_back(smp.wl.at(station));
    }
  return out;
}

void write_cycle(const std::filesystem::path& run_dir, const CycleResult& cr) {
  const auto dir = run_dir / "cycles" / fmt::format("c{:04}", cr.cycle);
  assim::write_analysis_csv(dir / "analysis.csv", cr.cycle, cr.stats);
  write_ensemble_restart(dir / "restart.bin", cr.restart);
}

void write_reanalysis(const std::filesystem::path& run_dir, const hydro::HydroModel& model,
                      const std::vector<CycleResult>& cycles) {
  const auto dir = run_dir / "reanalysis";
  const auto& geom = model.geometry();
  for (std::size_t s = 0; s < geom.stations.size(); ++s) {
    csv::Writer w(dir / fmt::format("wl_{}.csv", geom.stations[s].name), {"time_s", "wl_m"});
    const auto [times, wl] = reanalysis_series(cycles, s);
    for (std::size_t i = 0; i < times.size(); ++i)
      w.row({csv::format_double(times[i]), csv::format_double(wl[i])});
  }
  // State hand-off is exact but the spin-up re-integrates with new controls,
  // so the series may step at a join; the step is recorded.
  csv::Writer jw(dir / "joins.csv", {"time_s", "station", "jump_m"});
  for (std::size_t c = 1; c < cycles.size(); ++c) {
    const auto& prev = cycles[c - 1].segment.back();
    const auto& next = cycles[c].segment.front();
    if (prev.time != next.time) continue;
    for (std::size_t s = 0; s < geom.stations.size(); ++s)
      jw.row({csv::format_double(next.time), geom.stations[s].name,
              csv::format_double(next.wl[s] - prev.wl[s])});
  }
  csv::Writer ow(dir / "wsr_overpass.csv", {"time_s", "subdomain", "wsr", "stage_m"});
  for (const auto& cr : cycles)
    for (const auto& o : cr.overpasses)
      for (std::size_t m = 0; m < o.wsr.size(); ++m) {
        ow.row({csv::format_double(o.time), std::to_string(m + 1), csv::format_double(o.wsr[m]),
                csv::format_double(o.stage[m])});
        hydro::HydroState st;
        st.time = o.time;
        st.depth.assign(geom.n_cells(), 0.0);
        st.stage = o.stage;
        write_ascii_grid(dir / "extent" / fmt::format("t{}_sub{}.asc", csv::format_double(o.time), m + 1),
                         model.flood_extent(st, m));
      }
  csv::Writer mw(dir / "maxima.csv", {"kind", "location", "wl_max_m"});
  if (!cycles.empty()) {
    std::vector<double> cell_max(geom.n_cells(), -std::numeric_limits<double>::infinity());
    std::vector<double> stage_max(model.n_subdomains(), -std::numeric_limits<double>::infinity());
    for (const auto& cr : cycles) {
      for (std::size_t i = 0; i < cell_max.size(); ++i) cell_max[i] = std::max(cell_max[i], cr.cell_max[i]);
      for (std::size_t m = 0; m < stage_max.size(); ++m) stage_max[m] = std::max(stage_max[m], cr.stage_max[m]);
    }
    for (std::size_t i = 0; i < cell_max.size(); ++i)
      mw.row({"cell", std::to_string(i), csv::format_double(cell_max[i])});
    for (std::size_t m = 0; m < stage_max.size(); ++m)
      mw.row({"subdomain", std::to_string(m + 1), csv::format_double(stage_max[m])});
  }
}

void write_forecast(const std::filesystem::path& run_dir, const hydro::HydroModel& model,
                    const ForecastResult& fr) {
  const auto dir = run_dir / "forecasts" / fmt::format("issue_{}", csv::format_double(fr.issue_time));
  for (std::size_t i = 0; i < fr.members.size(); ++i)
    hydro::write_trajectory_csv(dir / fmt::format("member{:03}.csv", i), model, fr.members[i]);
  const auto& geom = model.geometry();
  for (std::size_t s = 0; s < geom.stations.size(); ++s) {
    csv::Writer w(dir / fmt::format("mean_{}.csv", geom.stations[s].name), {"time_s", "wl_m"});
    for (std::size_t k = 0; k < fr.times.size(); ++k)
      w.row({csv::format_double(fr.times[k]), csv::format_double(fr.mean_wl[s][k])});
  }
  csv::Writer ws(dir / "mean_wsr.csv", {"time_s", "subdomain", "wsr", "stage_m"});
  for (std::size_t k = 0; k < fr.times.size(); ++k)
    for (std::size_t m = 0; m < fr.mean_wsr.size(); ++m)
      ws.row({csv::format_double(fr.times[k]), std::to_string(m + 1), csv::format_double(fr.mean_wsr[m][k]),
              csv::format_double(fr.mean_stage[m][k])});
  // Forecast-phase inflow before the mu factor, on the output grid.
  csv::Writer fw(dir / "forcing.csv", {"time_s", "q_m3s"});
  for (double t : fr.times) fw.row({csv::format_double(t), csv::format_double(fr.forcing.at(t))});
}

}  // namespace floodda::cycling
