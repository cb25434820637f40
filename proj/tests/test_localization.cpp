/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ensda/localization.hpp"
#include "ensda/models/darcy.hpp"

using ensda::gaspari_cohn;
using ensda::GridSpec;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// The two polynomial branches, written out independently of the library.
double inner_branch(double r) {
  return 1.0 - 5.0 / 3.0 * r * r + 5.0 / 8.0 * r * r * r + 0.5 * r * r * r * r -
         0.25 * r * r * r * r * r;
}
double outer_branch(double r) {
  return -2.0 / (3.0 * r) + 4.0 - 5.0 * r + 5.0 / 3.0 * r * r + 5.0 / 8.0 * r * r * r -
         0.5 * r * r * r * r + r * r * r * r * r / 12.0;
}

}  // namespace

TEST_CASE("gaspari-cohn endpoint and knot values") {
  REQUIRE(gaspari_cohn(0.0) == 1.0);
  REQUIRE(inner_branch(1.0) == Catch::Approx(5.0 / 24.0).margin(1e-12));
  REQUIRE(outer_branch(1.0) == Catch::Approx(5.0 / 24.0).margin(1e-12));
  REQUIRE(gaspari_cohn(1.0) == Catch::Approx(5.0 / 24.0).margin(1e-12));
  REQUIRE(outer_branch(2.0) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(gaspari_cohn(2.0) == 0.0);
  REQUIRE(gaspari_cohn(2.5) == 0.0);
  REQUIRE(gaspari_cohn(100.0) == 0.0);
  REQUIRE_THROWS_AS(gaspari_cohn(-0.1), std::invalid_argument);
}

TEST_CASE("gaspari-cohn is continuous, bounded and non-increasing") {
  double previous = gaspari_cohn(0.0);
  for (int i = 1; i <= 10000; ++i) {
    const double r = 2.0 * i / 10000.0;
    const double v = gaspari_cohn(r);
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
    REQUIRE(v <= previous + 1e-12);
    previous = v;
  }
  // branch agreement at the knots
  REQUIRE(std::abs(inner_branch(1.0) - outer_branch(1.0)) < 1e-12);
  REQUIRE(std::abs(outer_branch(2.0)) < 1e-12);
}

TEST_CASE("taper entries: zero distance gives one, support ends at two radii") {
  const GridSpec grid(5);
  const Eigen::Vector2d center = grid.cell_center(12);
  const MatrixXd taper = ensda::build_taper(grid, {center}, 0.7);
  REQUIRE(taper(12, 0) == 1.0);
  for (int l = 0; l < grid.cell_count(); ++l) {
    const double d = (grid.cell_center(l) - center).norm();
    REQUIRE(taper(l, 0) >= 0.0);
    REQUIRE(taper(l, 0) <= 1.0);
    if (d >= 1.4) REQUIRE(taper(l, 0) == 0.0);
    if (d < 1.4) REQUIRE(taper(l, 0) > 0.0);
  }
}

TEST_CASE("large radius keeps every entry positive, small radius is an indicator") {
  const GridSpec grid(9);
  std::vector<Eigen::Vector2d> wells = {grid.cell_center(3), grid.cell_center(40),
                                        grid.cell_center(77)};
  const MatrixXd wide = ensda::build_taper(grid, wells, 6.0 * std::sqrt(2.0));
  REQUIRE((wide.array() > 0.0).all());

  const MatrixXd narrow = ensda::build_taper(grid, wells, 1e-9);
  for (int l = 0; l < grid.cell_count(); ++l)
    for (int o = 0; o < 3; ++o) {
      const double expected = (grid.cell_center(l) - wells[o]).norm() == 0.0 ? 1.0 : 0.0;
      REQUIRE(narrow(l, o) == expected);
    }
}

TEST_CASE("observation locations outside the domain are rejected") {
  const GridSpec grid(4);
  REQUIRE_THROWS_AS(ensda::build_taper(grid, {Eigen::Vector2d(7.0, 1.0)}, 1.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(ensda::build_taper(grid, {grid.cell_center(0)}, 0.0), std::invalid_argument);
}

TEST_CASE("taper rows select the wells within two radii of the cell") {
  const GridSpec grid(35);
  const auto wells = ensda::well_lattice(grid, 7);
  REQUIRE(wells.size() == 49);
  const double r_loc = 1.0;
  const MatrixXd taper = ensda::build_taper(grid, wells, r_loc);

  const int cell = 17 * 35 + 17;  // interior cell near the domain center
  const VectorXd row = ensda::taper_row(taper, cell);
  const Eigen::Vector2d x = grid.cell_center(cell);
  for (int o = 0; o < 49; ++o) {
    const double d = (x - wells[o]).norm();
    if (d < 2.0 * r_loc)
      REQUIRE(row[o] > 0.0);
    else
      REQUIRE(row[o] == 0.0);
  }

  const MatrixXd all_ones = MatrixXd::Ones(grid.cell_count(), 49);
  REQUIRE((ensda::taper_row(all_ones, cell).array() == 1.0).all());
  REQUIRE_THROWS_AS(ensda::taper_row(taper, grid.cell_count()), std::out_of_range);
  REQUIRE_THROWS_AS(ensda::taper_row(taper, -1), std::out_of_range);
}
