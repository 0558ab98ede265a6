#include "floodda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace floodda::metrics {

namespace {

// Index of the sample closest to t (ties toward the earlier one).
std::size_t nearest(const std::vector<double>& times, double t) {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0;
  if (it == times.end()) return times.size() - 1;
  const auto i = static_cast<std::size_t>(it - times.begin());
  return (t - times[i - 1]) <= (times[i] - t) ? i - 1 : i;
}

double native_half_interval(const Series& s) {
  if (s.times.size() < 2) return 0.0;
  return 0.5 * (s.times[1] - s.times[0]);
}

}  // namespace

double rmse(const Series& sim, const Series& obs, double tolerance) {
  if (sim.times.size() != sim.values.size() || obs.times.size() != obs.values.size())
    throw std::invalid_argument("rmse: times and values differ in length");
  double ss = 0.0;
  std::size_t n = 0;
  if (!sim.times.empty()) {
    for (std::size_t k = 0; k < obs.times.size(); ++k) {
      const std::size_t i = nearest(sim.times, obs.times[k]);
      if (std::abs(sim.times[i] - obs.times[k]) > tolerance) continue;
      const double d = sim.values[i] - obs.values[k];
      ss += d * d;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("rmse: series do not overlap");
  return std::sqrt(ss / static_cast<double>(n));
}

double rmse(const Series& sim, const Series& obs) { return rmse(sim, obs, native_half_interval(obs)); }

double gain(const std::vector<double>& rmse_da, const std::vector<double>& rmse_ol) {
  if (rmse_da.size() != rmse_ol.size() || rmse_da.empty())
    throw std::invalid_argument("gain: station sets differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < rmse_da.size(); ++i) {
    if (!(rmse_ol[i] > 0.0)) throw std::invalid_argument("gain: open-loop RMSE is zero");
    sum += 1.0 - rmse_da[i] / rmse_ol[i];
  }
  return 100.0 * sum / static_cast<double>(rmse_da.size());
}

ContingencyMap contingency(const WetMask& sim, const WetMask& obs) {
  if (sim.header.n_rows != obs.header.n_rows || sim.header.n_cols != obs.header.n_cols ||
      sim.cells.size() != obs.cells.size())
    throw std::invalid_argument(fmt::format("contingency: shape mismatch ({}x{} vs {}x{})",
                                            sim.header.n_rows, sim.header.n_cols, obs.header.n_rows,
                                            obs.header.n_cols));
  ContingencyMap m;
  m.labels.header = sim.header;
  m.labels.header.nodata = kContingencyNoData;
  m.labels.cells.resize(sim.cells.size());
  for (std::size_t p = 0; p < sim.cells.size(); ++p) {
    const auto s = sim.cells[p];
    const auto o = obs.cells[p];
    int label;
    if (s == WetMask::kNoData || o == WetMask::kNoData) {
      m.labels.cells[p] = kContingencyNoData;
      continue;
    }
    if (s == WetMask::kWet) label = o == WetMask::kWet ? TP : FP;
    else label = o == WetMask::kWet ? FN : TN;
    m.labels.cells[p] = label;
    ++m.counts[static_cast<std::size_t>(label)];
  }
  return m;
}

CsiResult csi(const ContingencyMap& map) {
  const std::size_t tp = map.counts[TP];
  const std::size_t denom = tp + map.counts[FP] + map.counts[FN];
  if (denom == 0) {
    spdlog::info("CSI undefined (no wet pixel in either map); reporting 100");
    return {100.0, true};
  }
  return {100.0 * static_cast<double>(tp) / static_cast<double>(denom), false};
}

double hwm_rmse(const std::vector<double>& simulated_max, const std::vector<double>& hwm) {
  if (simulated_max.size() != hwm.size() || hwm.empty())
    throw std::invalid_argument("hwm_rmse: every mark needs one simulated maximum");
  double ss = 0.0;
  for (std::size_t i = 0; i < hwm.size(); ++i) ss += (simulated_max[i] - hwm[i]) * (simulated_max[i] - hwm[i]);
  return std::sqrt(ss / static_cast<double>(hwm.size()));
}

double leadtime_rmse(const Series& lead_series, const Series& obs, double period_begin,
                     double period_end, double tolerance) {
  Series sub;
  for (std::size_t i = 0; i < lead_series.times.size(); ++i)
    if (lead_series.times[i] >= period_begin && lead_series.times[i] <= period_end) {
      sub.times.push_back(lead_series.times[i]);
      sub.values.push_back(lead_series.values[i]);
    }
  if (sub.times.empty()) throw std::invalid_argument("leadtime_rmse: no forecast in the period");
  // Pair each valid time with the nearest observation.
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < sub.times.size(); ++i) {
    if (obs.times.empty()) break;
    const std::size_t k = nearest(obs.times, sub.times[i]);
    if (std::abs(obs.times[k] - sub.times[i]) > tolerance) continue;
    ss += (sub.values[i] - obs.values[k]) * (sub.values[i] - obs.values[k]);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("leadtime_rmse: no observation pairs with the forecasts");
  return std::sqrt(ss / static_cast<double>(n));
}

}  // namespace floodda::metrics
