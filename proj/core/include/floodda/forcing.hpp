#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace floodda::forcing {

/// Inflow discharge time series (m^3/s), piecewise linear between samples.
class Hydrograph {
 public:
  Hydrograph() = default;
  /// Requires strictly increasing times, finite non-negative discharges and
  /// at least one sample.
  Hydrograph(std::vector<double> times, std::vector<double> discharge);

  static Hydrograph constant(double q, double t_begin, double t_end);

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& discharge() const { return q_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }
  double start() const { return times_.front(); }
  double end() const { return times_.back(); }
  bool covers(double t0, double t1) const;

  /// Interpolated value; throws MissingInputError outside [start, end].
  double at(double t) const;
  /// Interpolated value with the end samples held outside the span.
  double at_clamped(double t) const;
  /// Exact time average of the interpolant over [t0, t1] (t1 > t0).
  double mean_over(double t0, double t1) const;

  double peak() const;
  double peak_time() const;

 private:
  double integral_to(double t) const;  // clamped cumulative integral from start()

  std::vector<double> times_;
  std::vector<double> q_;
  std::vector<double> cumulative_;
};

/// Single-peak synthetic flood wave.
struct EventShape {
  double base = 400.0;        // m^3/s
  double peak = 5100.0;       // m^3/s
  double t_peak = 72.0 * 3600.0;
  double rise = 48.0 * 3600.0;     // onset-to-peak duration
  double rise_shape = 4.0;         // gamma exponent on the rising limb
  double recession_shape = 2.0;    // gamma exponent on the recession
  double t_start = 0.0;
  double t_end = 168.0 * 3600.0;
  double sample_interval = 3600.0;
};

Hydrograph synth_event_hydrograph(const EventShape& shape);

/// Systematic error of the large-scale model relative to observed discharge:
/// Q'(t) = a(t) * Q(t - shift), then a centred moving average.
struct BiasModel {
  double amplitude = 0.70;
  double shift = -43200.0;       // s; negative shifts the peak earlier
  double smoothing_window = 0.0; // s; 0 disables smoothing
  /// Optional (time, amplitude) knots for non-stationary bias; when present
  /// they replace `amplitude` and are interpolated linearly.
  std::vector<std::pair<double, double>> amplitude_schedule;

  double amplitude_at(double t) const;
  void validate() const;
};

Hydrograph apply_bias(const Hydrograph& observed, const BiasModel& bias);

/// Pointwise multiplication by a positive factor.
Hydrograph scale(const Hydrograph& h, double mu);

enum class Strategy { CC, VC, VQ };
enum class Phase { Reanalysis, Forecast };

Strategy parse_strategy(std::string_view s);
std::string to_string(Strategy s);

/// Forcing source for a strategy and phase. Reanalysis: CC uses the biased
/// series, VC/VQ the observed one. Forecast: CC/VC use the biased series, VQ
/// holds observed(t0) for every t > t0. `t_end` is the last instant the
/// caller needs; a source that stops short of it is an error.
Hydrograph select_forcing(Strategy strategy, Phase phase, const Hydrograph& observed,
                          const Hydrograph& biased, double t0, double t_end);

Hydrograph read_hydrograph_csv(const std::filesystem::path& path);
void write_hydrograph_csv(const std::filesystem::path& path, const Hydrograph& h);

}  // namespace floodda::forcing
