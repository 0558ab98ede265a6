#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "floodda/raster.hpp"

namespace floodda::metrics {

struct Series {
  std::vector<double> times;
  std::vector<double> values;
};

/// RMSE over pairs matched to the nearest simulated sample within
/// `tolerance` seconds of each observation time (default: half the native
/// interval of the observations).
double rmse(const Series& sim, const Series& obs, double tolerance);
double rmse(const Series& sim, const Series& obs);

/// Mean over stations of (1 - rmse_da / rmse_ol), in percent.
double gain(const std::vector<double>& rmse_da, const std::vector<double>& rmse_ol);

enum Label : int { TN = 0, TP = 1, FP = 2, FN = 3 };
inline constexpr int kContingencyNoData = -9999;

struct ContingencyMap {
  IntRaster labels;
  std::array<std::size_t, 4> counts{};  // indexed by Label

  std::size_t valid() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

ContingencyMap contingency(const WetMask& sim, const WetMask& obs);

struct CsiResult {
  double value = 0.0;       // percent
  bool degenerate = false;  // no wet pixel in either map
};

CsiResult csi(const ContingencyMap& map);

/// RMSE between simulated maxima and marks, point by point.
double hwm_rmse(const std::vector<double>& simulated_max, const std::vector<double>& hwm);

/// RMSE of a lead-time series against observations restricted to
/// [period_begin, period_end].
double leadtime_rmse(const Series& lead_series, const Series& obs, double period_begin,
                     double period_end, double tolerance);

}  // namespace floodda::metrics
