#include "floodda/observations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

#include "floodda/csv.hpp"
#include "floodda/error.hpp"
#include "floodda/random.hpp"

namespace floodda::obs {

namespace {

constexpr double kTimeTol = 1e-6;  // s

bool on_hour(double t) {
  const double r = std::fmod(t, 3600.0);
  return std::abs(r) < kTimeTol || std::abs(r - 3600.0) < kTimeTol;
}

}  // namespace

std::size_t ObsVector::count(Kind kind) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [kind](const Entry& e) { return e.kind == kind; }));
}

void ObsVector::sort() {
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tuple(a.time, static_cast<int>(a.kind), a.id) <
           std::tuple(b.time, static_cast<int>(b.kind), b.id);
  });
}

void ObsVector::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    if (!(e.sigma > 0.0) || !std::isfinite(e.value))
      throw std::invalid_argument(fmt::format("observation {}: need finite value and sigma > 0", i));
    if (e.kind == Kind::WSR && (e.value < 0.0 || e.value > 1.0))
      throw std::invalid_argument(fmt::format("observation {}: WSR outside [0, 1]", i));
    if (i > 0) {
      const Entry& p = entries[i - 1];
      if (std::tuple(e.time, static_cast<int>(e.kind), e.id) <
          std::tuple(p.time, static_cast<int>(p.kind), p.id))
        throw std::invalid_argument("observation vector not sorted by (time, kind, id)");
    }
  }
}

void GaugeSeries::validate() const {
  if (times.size() != wl.size()) throw std::invalid_argument("gauge " + station + ": size mismatch");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(wl[i]) || !std::isfinite(times[i]))
      throw std::invalid_argument("gauge " + station + ": non-finite sample");
    if (i > 0 && !(times[i] > times[i - 1]))
      throw std::invalid_argument("gauge " + station + ": times not strictly increasing");
  }
}

std::vector<double> OverpassSet::times() const {
  std::vector<double> t;
  for (const auto& r : records) t.push_back(r.time);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

void OverpassSet::validate() const {
  for (const auto& r : records)
    if (!(r.wsr >= 0.0 && r.wsr <= 1.0) || !(r.sigma > 0.0))
      throw std::invalid_argument(fmt::format("overpass t={} subdomain {}: invalid wsr/sigma",
                                              r.time, r.subdomain));
}

void ObsErrorModel::validate() const {
  if (!(sigma_wl_base > 0.0) || !(sigma_wsr_base > 0.0) || !(alpha >= 0.0))
    throw ConfigError("observation errors: sigmas must be > 0 and alpha >= 0");
}

double sigma_at(double base, double t, double t0, double window, double alpha) {
  if (!(window > 0.0)) throw std::invalid_argument("sigma_at: window must be > 0");
  if (t > t0 + kTimeTol || t < t0 - window - kTimeTol)
    throw std::invalid_argument(fmt::format("sigma_at: t={} outside [{}, {}]", t, t0 - window, t0));
  const double age = std::clamp(t0 - t, 0.0, window);
  return base * (1.0 + alpha * age / window);
}

Dataset synthesize_truth_obs(const hydro::HydroModel& model, const hydro::Trajectory& truth,
                             const ObsErrorModel& errors, const SynthesisOptions& options,
                             std::uint64_t seed) {
  using random::Purpose;
  using random::Stream;
  // Zero noise is allowed here (exact twin observations).
  if (!(errors.sigma_wl_base >= 0.0) || !(errors.sigma_wsr_base >= 0.0) || !(options.hwm_variance >= 0.0))
    throw ConfigError("synthesis: noise levels must be >= 0");
  const auto& geom = model.geometry();
  const double interval = model.params().output_interval;
  Dataset out;

  // Gauges: every trajectory sample on the native grid.
  for (std::size_t s = 0; s < geom.stations.size(); ++s) {
    const Stream noise({seed, Purpose::TruthNoise, 0, s});
    GaugeSeries g;
    g.station = geom.stations[s].name;
    g.native_interval = interval;
    std::uint64_t n = 0;
    for (const auto& st : truth.states) {
      const double r = std::fmod(st.time, interval);
      if (std::abs(r) > kTimeTol && std::abs(r - interval) > kTimeTol) continue;
      g.times.push_back(st.time);
      g.wl.push_back(model.water_level_at_cell(st, geom.stations[s].cell) +
                     errors.sigma_wl_base * noise.normal(n++));
    }
    out.gauges.push_back(std::move(g));
  }

  // Overpasses: WSR of the truth state with clipped noise.
  std::vector<double> passes = options.overpass_times;
  std::sort(passes.begin(), passes.end());
  for (std::size_t o = 0; o < passes.size(); ++o) {
    const double t = passes[o];
    if (t < truth.start() || t > truth.end())
      throw std::invalid_argument(fmt::format("overpass t={} outside truth span", t));
    const auto& st = truth.at(t);
    for (std::size_t k = 0; k < model.n_subdomains(); ++k) {
      const Stream noise({seed, Purpose::TruthNoise, 1, o});
      const double v = model.wsr(st, k) + errors.sigma_wsr_base * noise.normal(k);
      out.overpasses.records.push_back(
          {t, static_cast<int>(k) + 1, std::clamp(v, 0.0, 1.0), errors.sigma_wsr_base});
    }
  }

  // High water marks: stations, storage cells, then channel cells spread
  // along the reach.
  const std::size_t n_st = geom.stations.size();
  const std::size_t n_sub = model.n_subdomains();
  for (std::size_t i = 0; i < options.hwm_count; ++i) {
    HwmPoint p;
    p.id = fmt::format("hwm{:03}", i + 1);
    if (i < n_st) {
      p.kind = "station";
      p.location = static_cast<long>(geom.stations[i].cell);
    } else if (i < n_st + n_sub) {
      p.kind = "subdomain";
      p.location = static_cast<long>(i - n_st + 1);
    } else {
      const std::size_t j = i - n_st - n_sub;
      const std::size_t extra = options.hwm_count - n_st - n_sub;
      p.kind = "cell";
      p.location = static_cast<long>((j * geom.n_cells()) / std::max<std::size_t>(extra, 1) %
                                     geom.n_cells());
    }
    out.hwm.points.push_back(std::move(p));
  }
  const auto maxima = simulated_maxima(model, truth, out.hwm);
  const Stream noise({seed, Purpose::TruthNoise, 2, 0});
  const double sd = std::sqrt(options.hwm_variance);
  for (std::size_t i = 0; i < maxima.size(); ++i)
    out.hwm.points[i].wl_max = maxima[i] + sd * noise.normal(i);
  return out;
}

std::vector<double> simulated_maxima(const hydro::HydroModel& model,
                                     const hydro::Trajectory& trajectory, const HwmSet& hwm) {
  const auto& geom = model.geometry();
  std::vector<double> out;
  out.reserve(hwm.points.size());
  for (const auto& p : hwm.points) {
    double best = -std::numeric_limits<double>::infinity();
    if (p.kind == "subdomain") {
      if (p.location < 1 || static_cast<std::size_t>(p.location) > model.n_subdomains())
        throw MissingInputError(fmt::format("HWM {}: unknown subdomain {}", p.id, p.location));
      for (const auto& s : trajectory.states)
        best = std::max(best, s.stage[static_cast<std::size_t>(p.location - 1)]);
    } else if (p.kind == "station" || p.kind == "cell") {
      if (p.location < 0 || static_cast<std::size_t>(p.location) >= geom.n_cells())
        throw MissingInputError(fmt::format("HWM {}: cell {} outside the reach", p.id, p.location));
      for (const auto& s : trajectory.states)
        best = std::max(best, model.water_level_at_cell(s, static_cast<std::size_t>(p.location)));
    } else {
      throw MissingInputError(fmt::format("HWM {}: unknown kind '{}'", p.id, p.kind));
    }
    out.push_back(best);
  }
  return out;
}

ObsVector window_slice(const Dataset& data, double t_a, double t_b, const ObsErrorModel& errors,
                       double t0, bool with_wsr) {
  ObsVector v;
  if (!(t_b > t_a)) return v;
  const double window = t_b - t_a;
  for (std::size_t s = 0; s < data.gauges.size(); ++s) {
    const auto& g = data.gauges[s];
    for (std::size_t i = 0; i < g.times.size(); ++i) {
      const double t = g.times[i];
      if (t <= t_a || t > t_b || !on_hour(t)) continue;
      v.entries.push_back({Kind::WL, static_cast<int>(s), t, g.wl[i],
                           sigma_at(errors.sigma_wl_base, t, t0, window, errors.alpha)});
    }
  }
  if (with_wsr) {
    for (const auto& r : data.overpasses.records) {
      if (r.time <= t_a || r.time > t_b) continue;
      v.entries.push_back({Kind::WSR, r.subdomain - 1, r.time, r.wsr,
                           sigma_at(r.sigma, r.time, t0, window, errors.alpha)});
    }
  }
  v.sort();
  return v;
}

void write_gauge_csv(const std::filesystem::path& path, const GaugeSeries& g) {
  csv::Writer w(path, {"time_s", "wl_m"});
  for (std::size_t i = 0; i < g.times.size(); ++i)
    w.row({csv::format_double(g.times[i]), csv::format_double(g.wl[i])});
}

GaugeSeries read_gauge_csv(const std::filesystem::path& path, const std::string& station) {
  const auto t = csv::read(path);
  GaugeSeries g;
  g.station = station;
  g.times = t.numbers("time_s");
  g.wl = t.numbers("wl_m");
  if (g.times.size() >= 2) g.native_interval = g.times[1] - g.times[0];
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw MissingInputError(path.string() + ": " + e.what());
  }
  return g;
}

void write_overpass_csv(const std::filesystem::path& path, const OverpassSet& o) {
  csv::Writer w(path, {"time_s", "subdomain", "wsr", "sigma"});
  for (const auto& r : o.records)
    w.row({csv::format_double(r.time), std::to_string(r.subdomain), csv::format_double(r.wsr),
           csv::format_double(r.sigma)});
}

OverpassSet read_overpass_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto time = t.numbers("time_s");
  const auto sub = t.numbers("subdomain");
  const auto wsr = t.numbers("wsr");
  const auto sigma = t.numbers("sigma");
  OverpassSet o;
  for (std::size_t i = 0; i < time.size(); ++i)
    o.records.push_back({time[i], static_cast<int>(sub[i]), wsr[i], sigma[i]});
  try {
    o.validate();
  } catch (const std::invalid_argument& e) {
    throw MissingInputError(path.string() + ": " + e.what());
  }
  return o;
}

void write_hwm_csv(const std::filesystem::path& path, const HwmSet& h) {
  csv::Writer w(path, {"point_id", "kind", "location", "wl_max_m"});
  for (const auto& p : h.points)
    w.row({p.id, p.kind, std::to_string(p.location), csv::format_double(p.wl_max)});
}

HwmSet read_hwm_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto ids = t.strings("point_id");
  const auto kinds = t.strings("kind");
  const auto loc = t.numbers("location");
  const auto val = t.numbers("wl_max_m");
  HwmSet h;
  for (std::size_t i = 0; i < ids.size(); ++i)
    h.points.push_back({ids[i], kinds[i], static_cast<long>(loc[i]), val[i]});
  return h;
}

}  // namespace floodda::obs
