#pragma once

#include <polyfit/error.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace polyfit {

/// Coefficient of determination 1 - SS_res / SS_tot.
inline double r_squared(std::span<const double> pred, std::span<const double> obs) {
  if (pred.size() != obs.size()) fail(ErrorKind::InvalidParameter, "series lengths differ");
  if (obs.size() < 2) fail(ErrorKind::UndefinedMetric, "R^2 needs at least two observations");
  const double mean = std::accumulate(obs.begin(), obs.end(), 0.0) / static_cast<double>(obs.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    ss_res += (obs[i] - pred[i]) * (obs[i] - pred[i]);
    ss_tot += (obs[i] - mean) * (obs[i] - mean);
  }
  if (!(ss_tot > 0.0)) fail(ErrorKind::UndefinedMetric, "observations have zero variance");
  return 1.0 - ss_res / ss_tot;
}

inline double mae(std::span<const double> pred, std::span<const double> obs) {
  if (pred.size() != obs.size()) fail(ErrorKind::InvalidParameter, "series lengths differ");
  if (obs.empty()) fail(ErrorKind::UndefinedMetric, "MAE of an empty series");
  double s = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) s += std::abs(pred[i] - obs[i]);
  return s / static_cast<double>(obs.size());
}

inline double median(std::vector<double> v) {
  if (v.empty()) fail(ErrorKind::UndefinedMetric, "median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) fail(ErrorKind::UndefinedMetric, "mean of an empty list");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation; zero for a single value.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace polyfit
