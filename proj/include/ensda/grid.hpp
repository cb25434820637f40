/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_GRID_HPP
#define ENSDA_GRID_HPP

#include <Eigen/Dense>
#include <stdexcept>

namespace ensda {

/// Uniform cell-centered N x N grid over the square domain [0, L] x [0, L].
/// Cells are indexed l = iy * N + ix (x fastest).
struct GridSpec {
  int cells_per_side = 0;
  double domain_size = 6.0;

  GridSpec() = default;
  GridSpec(int n, double length = 6.0) : cells_per_side(n), domain_size(length) {
    if (n < 1) throw std::invalid_argument("GridSpec: cells_per_side must be >= 1");
    if (length <= 0.0) throw std::invalid_argument("GridSpec: domain_size must be > 0");
  }

  double dx() const { return domain_size / cells_per_side; }
  int cell_count() const { return cells_per_side * cells_per_side; }

  Eigen::Vector2d cell_center(int l) const {
    const int ix = l % cells_per_side;
    const int iy = l / cells_per_side;
    const double h = dx();
    return {(ix + 0.5) * h, (iy + 0.5) * h};
  }

  bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= 0.0 && p.x() <= domain_size && p.y() >= 0.0 && p.y() <= domain_size;
  }
};

}  // namespace ensda

#endif  // ENSDA_GRID_HPP
