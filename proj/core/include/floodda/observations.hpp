#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "floodda/hydro.hpp"

namespace floodda::obs {

enum class Kind : int { WL = 0, WSR = 1 };

/// One assimilated measurement. `id` is a station index for WL and a
/// zero-based subdomain index for WSR.
struct Entry {
  Kind kind = Kind::WL;
  int id = 0;
  double time = 0.0;
  double value = 0.0;
  double sigma = 1.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Observation vector of one analysis, sorted by (time, kind, id).
struct ObsVector {
  std::vector<Entry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  std::size_t count(Kind kind) const;
  void sort();
  void validate() const;
};

/// Gauge water levels of one station at the native interval.
struct GaugeSeries {
  std::string station;
  double native_interval = 900.0;
  std::vector<double> times;
  std::vector<double> wl;

  void validate() const;
};

struct WsrRecord {
  double time = 0.0;
  int subdomain = 1;  // 1-based, as in the CSV
  double wsr = 0.0;
  double sigma = 0.05;
};

/// Satellite overpasses: one record per (time, subdomain).
struct OverpassSet {
  std::vector<WsrRecord> records;

  std::vector<double> times() const;  // distinct, ascending
  void validate() const;
};

/// High water mark. `kind` is "station", "subdomain" or "cell"; `location`
/// is a channel cell for stations and cells, a 1-based subdomain id otherwise.
struct HwmPoint {
  std::string id;
  std::string kind;
  long location = 0;
  double wl_max = 0.0;
};

struct HwmSet {
  std::vector<HwmPoint> points;
};

struct ObsErrorModel {
  double sigma_wl_base = 0.05;   // m
  double sigma_wsr_base = 0.05;
  double alpha = 1.0;            // relative growth of sigma across a window

  void validate() const;
};

/// sigma(t) = base * (1 + alpha * (t0 - t) / window) for t in [t0 - window, t0].
double sigma_at(double base, double t, double t0, double window, double alpha);

struct Dataset {
  std::vector<GaugeSeries> gauges;  // in station order of the geometry
  OverpassSet overpasses;
  HwmSet hwm;
};

struct SynthesisOptions {
  std::vector<double> overpass_times;
  double hwm_variance = 0.1;   // m^2
  std::size_t hwm_count = 178;
};

/// Twin observations from a truth trajectory sampled on the gauge interval
/// and at every overpass instant.
Dataset synthesize_truth_obs(const hydro::HydroModel& model, const hydro::Trajectory& truth,
                             const ObsErrorModel& errors, const SynthesisOptions& options,
                             std::uint64_t seed);

/// Per-point event maxima of the simulated water level (stage for
/// subdomain points).
std::vector<double> simulated_maxima(const hydro::HydroModel& model,
                                     const hydro::Trajectory& trajectory, const HwmSet& hwm);

/// Observations for an analysis over [t_a, t_b] (t_b = t0): hourly gauge
/// samples and, when `with_wsr`, overpasses, both restricted to (t_a, t_b].
ObsVector window_slice(const Dataset& data, double t_a, double t_b, const ObsErrorModel& errors,
                       double t0, bool with_wsr);

void write_gauge_csv(const std::filesystem::path& path, const GaugeSeries& g);
GaugeSeries read_gauge_csv(const std::filesystem::path& path, const std::string& station);
void write_overpass_csv(const std::filesystem::path& path, const OverpassSet& o);
OverpassSet read_overpass_csv(const std::filesystem::path& path);
void write_hwm_csv(const std::filesystem::path& path, const HwmSet& h);
HwmSet read_hwm_csv(const std::filesystem::path& path);

}  // namespace floodda::obs
