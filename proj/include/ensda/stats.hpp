/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_STATS_HPP
#define ENSDA_STATS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ensda {

/// Fixed-range histogram; samples outside [lo, hi] are clamped into the
/// edge bins so mass is conserved.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  Eigen::VectorXd counts;

  static Histogram build(const Eigen::VectorXd& samples, double lo, double hi, int bins) {
    if (!(hi > lo) || bins < 1) throw std::invalid_argument("Histogram: bad range");
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts = Eigen::VectorXd::Zero(bins);
    const double width = (hi - lo) / bins;
    for (int i = 0; i < samples.size(); ++i) {
      int b = static_cast<int>((samples[i] - lo) / width);
      b = std::clamp(b, 0, bins - 1);
      h.counts[b] += 1.0;
    }
    return h;
  }

  int bins() const { return static_cast<int>(counts.size()); }
  double bin_center(int b) const { return lo + (b + 0.5) * (hi - lo) / bins(); }

  Eigen::VectorXd frequencies() const {
    const double total = counts.sum();
    return total > 0.0 ? (counts / total).eval() : counts;
  }
};

/// Total-variation distance between two discrete distributions on the same
/// bins: half the L1 distance.
inline double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: size mismatch");
  return 0.5 * (p - q).cwiseAbs().sum();
}

/// Indices of local maxima with height at least `min_rel_height` times the
/// global maximum (filters sampling noise in near-empty tails).
inline std::vector<int> local_maxima(const Eigen::VectorXd& freq, double min_rel_height = 0.1) {
  std::vector<int> modes;
  const double floor_height = freq.maxCoeff() * min_rel_height;
  for (int b = 0; b < freq.size(); ++b) {
    const double left = b > 0 ? freq[b - 1] : -1.0;
    const double right = b + 1 < freq.size() ? freq[b + 1] : -1.0;
    if (freq[b] >= floor_height && freq[b] > left && freq[b] >= right) modes.push_back(b);
  }
  return modes;
}

/// Local maxima surviving a prominence merge: a peak only counts if it rises
/// above the deepest valley separating it from every taller accepted peak by
/// at least `min_prominence` times its own height. Sampling noise on a
/// smooth bump then reads as one mode.
inline std::vector<int> prominent_modes(const Eigen::VectorXd& freq, double min_rel_height = 0.1,
                                        double min_prominence = 0.2) {
  std::vector<int> candidates = local_maxima(freq, min_rel_height);
  std::sort(candidates.begin(), candidates.end(),
            [&](int a, int b) { return freq[a] > freq[b]; });
  std::vector<int> accepted;
  for (int p : candidates) {
    bool shoulder = false;
    for (int taller : accepted) {
      const int lo = std::min(p, taller), hi = std::max(p, taller);
      double valley = freq[lo];
      for (int b = lo; b <= hi; ++b) valley = std::min(valley, freq[b]);
      if (freq[p] - valley < min_prominence * freq[p]) {
        shoulder = true;
        break;
      }
    }
    if (!shoulder) accepted.push_back(p);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

/// Percentile with linear interpolation between order statistics:
/// rank = p/100 * (n - 1), value = x[floor] + frac * (x[floor+1] - x[floor]).
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: empty sample");
  if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile: p in [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * (static_cast<double>(values.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(rank);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

inline double sample_skewness(const Eigen::VectorXd& samples) {
  const double n = static_cast<double>(samples.size());
  if (n < 3) throw std::invalid_argument("sample_skewness: needs at least 3 samples");
  const double mean = samples.mean();
  const Eigen::ArrayXd centered = samples.array() - mean;
  const double m2 = centered.square().sum() / n;
  const double m3 = centered.cube().sum() / n;
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

}  // namespace ensda

#endif  // ENSDA_STATS_HPP
