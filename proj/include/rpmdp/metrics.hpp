#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rpmdp/linmdp.hpp"

namespace rpmdp {

// Cost-sublinearity probe: fit a line to the first m points of the
// cumulative-cost curve and ask whether the curve falls below the line's
// extrapolation over the remainder. statistic = sum_{t=m..T} (g(t) - C_t);
// a guard band of 1e-9 * T * max(1, max|C_t|) absorbs float noise so an
// exactly linear curve is deterministically "not sublinear".
struct M1Result {
  bool sublinear = false;
  double statistic = 0.0;
  double deadband = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
};

inline M1Result metric_m1(const std::vector<double>& cumulative, long m) {
  const long T = long(cumulative.size());
  if (m < 2) throw ValidationError("metric_m1: fit window must be >= 2");
  if (T <= m) throw ValidationError("metric_m1: need more episodes than the fit window");
  // Centered least squares on (t, C_t), t = 1..m.
  double t_mean = 0.0, y_mean = 0.0;
  for (long i = 0; i < m; ++i) {
    t_mean += double(i + 1);
    y_mean += cumulative[i];
  }
  t_mean /= double(m);
  y_mean /= double(m);
  double sxx = 0.0, sxy = 0.0;
  for (long i = 0; i < m; ++i) {
    const double dt = double(i + 1) - t_mean;
    sxx += dt * dt;
    sxy += dt * (cumulative[i] - y_mean);
  }
  M1Result out;
  out.slope = sxx > 0 ? sxy / sxx : 0.0;
  out.intercept = y_mean - out.slope * t_mean;
  double stat = 0.0, scale = 0.0;
  for (long t = m; t <= T; ++t) {
    stat += (out.slope * double(t) + out.intercept) - cumulative[t - 1];
  }
  for (double c : cumulative) scale = std::max(scale, std::abs(c));
  out.statistic = stat;
  out.deadband = 1e-9 * double(T) * std::max(1.0, scale);
  out.sublinear = stat > out.deadband;
  return out;
}

// Adoption probe: mean per-episode agreement with the target policy on
// support steps over the final tail of the run.
struct M2Result {
  bool success = false;
  double mean_tail_agreement = 0.0;
  long tail_episodes = 0;
};

inline M2Result metric_m2(const std::vector<double>& agreement, double threshold = 0.9,
                          double tail_fraction = 0.25) {
  if (agreement.empty()) throw ValidationError("metric_m2: empty agreement series");
  if (tail_fraction <= 0 || tail_fraction > 1)
    throw ValidationError("metric_m2: tail fraction must be in (0,1]");
  const long T = long(agreement.size());
  const long n_tail = std::max<long>(1, long(std::floor(double(T) * tail_fraction)));
  double mean = 0.0;
  for (long i = T - n_tail; i < T; ++i) mean += agreement[i];
  mean /= double(n_tail);
  M2Result out;
  out.mean_tail_agreement = mean;
  out.tail_episodes = n_tail;
  out.success = mean >= threshold;
  return out;
}

}  // namespace rpmdp
