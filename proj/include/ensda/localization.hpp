/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_LOCALIZATION_HPP
#define ENSDA_LOCALIZATION_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ensda/grid.hpp"

namespace ensda {

/// Gaspari-Cohn fifth-order taper. Compactly supported on [0, 2],
/// equal to 1 at the origin, continuous at the knots r = 1 and r = 2.
inline double gaspari_cohn(double r) {
  if (r < 0.0) throw std::invalid_argument("gaspari_cohn: negative distance");
  if (r >= 2.0) return 0.0;
  const double r2 = r * r;
  const double r3 = r2 * r;
  const double r4 = r3 * r;
  const double r5 = r4 * r;
  if (r <= 1.0)
    return 1.0 - (5.0 / 3.0) * r2 + (5.0 / 8.0) * r3 + 0.5 * r4 - 0.25 * r5;
  return -(2.0 / 3.0) / r + 4.0 - 5.0 * r + (5.0 / 3.0) * r2 + (5.0 / 8.0) * r3 - 0.5 * r4 +
         (1.0 / 12.0) * r5;
}

/// Distance-based taper between every grid cell and every observation:
/// entry (l, obs) = gaspari_cohn(|X_l - r_obs| / r_loc), Euclidean distance
/// in physical coordinates. Support radius is exactly 2 * r_loc. Built once
/// per (grid, observations, radius) tuple and reused each iteration.
inline Eigen::MatrixXd build_taper(const GridSpec& grid,
                                   const std::vector<Eigen::Vector2d>& obs_locations,
                                   double r_loc) {
  if (!(r_loc > 0.0)) throw std::invalid_argument("build_taper: r_loc must be > 0");
  for (const auto& p : obs_locations)
    if (!grid.contains(p))
      throw std::invalid_argument("build_taper: observation location outside the domain");
  const int cells = grid.cell_count();
  const int kappa = static_cast<int>(obs_locations.size());
  Eigen::MatrixXd taper(cells, kappa);
  for (int l = 0; l < cells; ++l) {
    const Eigen::Vector2d x = grid.cell_center(l);
    for (int o = 0; o < kappa; ++o)
      taper(l, o) = gaspari_cohn((x - obs_locations[o]).norm() / r_loc);
  }
  return taper;
}

/// Row of the taper matrix for one cell, the diagonal that modifies the
/// likelihood of that cell's local update.
inline Eigen::VectorXd taper_row(const Eigen::MatrixXd& taper, int cell) {
  if (cell < 0 || cell >= taper.rows()) throw std::out_of_range("taper_row: cell out of range");
  return taper.row(cell).transpose();
}

}  // namespace ensda

#endif  // ENSDA_LOCALIZATION_HPP
