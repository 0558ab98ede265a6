#include "floodda/forcing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "floodda/csv.hpp"
#include "floodda/error.hpp"

namespace floodda::forcing {

Hydrograph::Hydrograph(std::vector<double> times, std::vector<double> discharge)
    : times_(std::move(times)), q_(std::move(discharge)) {
  if (times_.empty()) throw std::invalid_argument("Hydrograph: no samples");
  if (times_.size() != q_.size()) throw std::invalid_argument("Hydrograph: size mismatch");
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!std::isfinite(times_[i]) || !std::isfinite(q_[i]))
      throw std::invalid_argument("Hydrograph: non-finite sample");
    if (q_[i] < 0.0) throw std::invalid_argument("Hydrograph: negative discharge");
    if (i > 0 && !(times_[i] > times_[i - 1]))
      throw std::invalid_argument("Hydrograph: times must be strictly increasing");
  }
  cumulative_.assign(times_.size(), 0.0);
  for (std::size_t i = 1; i < times_.size(); ++i)
    cumulative_[i] = cumulative_[i - 1] + 0.5 * (q_[i] + q_[i - 1]) * (times_[i] - times_[i - 1]);
}

Hydrograph Hydrograph::constant(double q, double t_begin, double t_end) {
  if (t_end > t_begin) return Hydrograph({t_begin, t_end}, {q, q});
  return Hydrograph({t_begin}, {q});
}

bool Hydrograph::covers(double t0, double t1) const {
  return !times_.empty() && t0 >= times_.front() && t1 <= times_.back();
}

double Hydrograph::at(double t) const {
  if (times_.empty() || t < times_.front() || t > times_.back())
    throw MissingInputError(fmt::format("hydrograph undefined at t={} s (span [{}, {}])", t,
                                        times_.empty() ? 0.0 : times_.front(),
                                        times_.empty() ? 0.0 : times_.back()));
  return at_clamped(t);
}

double Hydrograph::at_clamped(double t) const {
  if (t <= times_.front()) return q_.front();
  if (t >= times_.back()) return q_.back();
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times_.begin()) - 1;
  if (t == times_[i]) return q_[i];
  const double w = (t - times_[i]) / (times_[i + 1] - times_[i]);
  return q_[i] + w * (q_[i + 1] - q_[i]);
}

double Hydrograph::integral_to(double t) const {
  if (t <= times_.front()) return (t - times_.front()) * q_.front();
  if (t >= times_.back()) return cumulative_.back() + (t - times_.back()) * q_.back();
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times_.begin()) - 1;
  const double qt = at_clamped(t);
  return cumulative_[i] + 0.5 * (q_[i] + qt) * (t - times_[i]);
}

double Hydrograph::mean_over(double t0, double t1) const {
  if (!(t1 > t0)) return at_clamped(t0);
  return (integral_to(t1) - integral_to(t0)) / (t1 - t0);
}

double Hydrograph::peak() const { return *std::max_element(q_.begin(), q_.end()); }

double Hydrograph::peak_time() const {
  return times_[static_cast<std::size_t>(std::max_element(q_.begin(), q_.end()) - q_.begin())];
}

Hydrograph synth_event_hydrograph(const EventShape& s) {
  if (!(s.peak >= s.base) || s.base < 0.0) throw std::invalid_argument("event: need peak >= base >= 0");
  if (!(s.t_end > s.t_start) || !(s.sample_interval > 0.0))
    throw std::invalid_argument("event: invalid time span or sample interval");
  if (!(s.rise > 0.0) || !(s.rise_shape > 0.0) || !(s.recession_shape > 0.0))
    throw std::invalid_argument("event: rise duration and shape exponents must be > 0");
  if (s.t_peak < s.t_start || s.t_peak > s.t_end)
    throw std::invalid_argument("event: t_peak outside the time span");

  const double onset = s.t_peak - s.rise;
  auto unit = [&](double t) {
    if (t <= onset) return 0.0;
    const double r = (t - onset) / s.rise;  // 1 at the peak
    const double k = t <= s.t_peak ? s.rise_shape : s.recession_shape;
    return std::pow(r, k) * std::exp(k * (1.0 - r));
  };

  std::vector<double> times;
  for (double t = s.t_start; t < s.t_end; t += s.sample_interval) {
    if (t > s.t_peak && (times.empty() || times.back() < s.t_peak)) times.push_back(s.t_peak);
    if (times.empty() || t > times.back()) times.push_back(t);
  }
  if (times.back() < s.t_peak) times.push_back(s.t_peak);
  if (times.back() < s.t_end) times.push_back(s.t_end);

  std::vector<double> q;
  q.reserve(times.size());
  for (double t : times) q.push_back(t == s.t_peak ? s.peak : s.base + (s.peak - s.base) * unit(t));
  return Hydrograph(std::move(times), std::move(q));
}

double BiasModel::amplitude_at(double t) const {
  if (amplitude_schedule.empty()) return amplitude;
  if (t <= amplitude_schedule.front().first) return amplitude_schedule.front().second;
  if (t >= amplitude_schedule.back().first) return amplitude_schedule.back().second;
  for (std::size_t i = 1; i < amplitude_schedule.size(); ++i) {
    const auto& [t1, a1] = amplitude_schedule[i];
    if (t <= t1) {
      const auto& [t0, a0] = amplitude_schedule[i - 1];
      return a0 + (a1 - a0) * (t - t0) / (t1 - t0);
    }
  }
  return amplitude_schedule.back().second;
}

void BiasModel::validate() const {
  if (!(amplitude > 0.0)) throw std::invalid_argument("bias: amplitude must be > 0");
  if (smoothing_window < 0.0) throw std::invalid_argument("bias: negative smoothing window");
  for (std::size_t i = 0; i < amplitude_schedule.size(); ++i) {
    if (!(amplitude_schedule[i].second > 0.0))
      throw std::invalid_argument("bias: schedule amplitudes must be > 0");
    if (i > 0 && !(amplitude_schedule[i].first > amplitude_schedule[i - 1].first))
      throw std::invalid_argument("bias: schedule times must increase");
  }
}

Hydrograph apply_bias(const Hydrograph& observed, const BiasModel& bias) {
  bias.validate();
  const auto& t = observed.times();
  std::vector<double> q(t.size());
  if (bias.smoothing_window > 0.0) {
    const double half = 0.5 * bias.smoothing_window;
    for (std::size_t i = 0; i < t.size(); ++i)
      q[i] = bias.amplitude_at(t[i]) *
             observed.mean_over(t[i] - half - bias.shift, t[i] + half - bias.shift);
  } else {
    for (std::size_t i = 0; i < t.size(); ++i)
      q[i] = bias.amplitude_at(t[i]) * observed.at_clamped(t[i] - bias.shift);
  }
  return Hydrograph(t, std::move(q));
}

Hydrograph scale(const Hydrograph& h, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("scale: mu must be > 0");
  std::vector<double> q = h.discharge();
  for (double& v : q) v *= mu;
  return Hydrograph(h.times(), std::move(q));
}

Strategy parse_strategy(std::string_view s) {
  if (s == "CC") return Strategy::CC;
  if (s == "VC") return Strategy::VC;
  if (s == "VQ") return Strategy::VQ;
  throw ConfigError("unknown forcing strategy '" + std::string(s) + "' (expected CC, VC or VQ)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::CC: return "CC";
    case Strategy::VC: return "VC";
    case Strategy::VQ: return "VQ";
  }
  return "?";
}

namespace {

void require_span(const Hydrograph& h, double t0, double t1, const char* what) {
  if (h.empty() || !h.covers(t0, t1))
    throw MissingInputError(fmt::format("{} forcing does not cover [{}, {}] s", what, t0, t1));
}

}  // namespace

Hydrograph select_forcing(Strategy strategy, Phase phase, const Hydrograph& observed,
                          const Hydrograph& biased, double t0, double t_end) {
  if (phase == Phase::Reanalysis) {
    const Hydrograph& src = strategy == Strategy::CC ? biased : observed;
    require_span(src, src.empty() ? t0 : std::min(src.start(), t0), t_end,
                 strategy == Strategy::CC ? "biased" : "observed");
    return src;
  }
  if (strategy == Strategy::VQ) {
    // Persistence: observed up to t0, then observed(t0) held constant.
    require_span(observed, observed.empty() ? t0 : observed.start(), t0, "observed");
    const double q0 = observed.at(t0);
    std::vector<double> times, q;
    for (std::size_t i = 0; i < observed.size() && observed.times()[i] < t0; ++i) {
      times.push_back(observed.times()[i]);
      q.push_back(observed.discharge()[i]);
    }
    times.push_back(t0);
    q.push_back(q0);
    if (t_end > t0) {
      times.push_back(t_end);
      q.push_back(q0);
    }
    return Hydrograph(std::move(times), std::move(q));
  }
  require_span(biased, biased.empty() ? t0 : std::min(biased.start(), t0), t_end, "biased");
  return biased;
}

Hydrograph read_hydrograph_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  try {
    return Hydrograph(table.numbers("time_s"), table.numbers("q_m3s"));
  } catch (const std::invalid_argument& e) {
    throw MissingInputError(path.string() + ": " + e.what());
  }
}

void write_hydrograph_csv(const std::filesystem::path& path, const Hydrograph& h) {
  csv::Writer w(path, {"time_s", "q_m3s"});
  for (std::size_t i = 0; i < h.size(); ++i)
    w.row({csv::format_double(h.times()[i]), csv::format_double(h.discharge()[i])});
}

}  // namespace floodda::forcing
