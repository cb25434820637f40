/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_MODELS_DARCY_HPP
#define ENSDA_MODELS_DARCY_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ensda/cg.hpp"
#include "ensda/ensemble.hpp"
#include "ensda/grid.hpp"
#include "ensda/models/random_field.hpp"
#include "ensda/rng.hpp"

namespace ensda {

/// Steady-state single-phase Darcy flow over [0,6]^2:
///   -div(k grad P) = F,
/// with P = 100 on y = 0, no flow through x = 6 and y = 6, and a prescribed
/// inflow -k dP/dx = 500 (1 + q) through x = 0. The model error q perturbs
/// the boundary flux; the error-free model has q = 0.
struct DarcyProblem {
  GridSpec grid;
  double dirichlet_pressure = 100.0;
  double influx_base = 500.0;

  explicit DarcyProblem(GridSpec g) : grid(g) {}
  DarcyProblem() : grid(70) {}

  /// Recharge bands of the benchmark aquifer.
  double source_at(double y) const {
    if (y <= 4.0) return 0.0;
    if (y <= 5.0) return 137.0;
    return 274.0;
  }

  Eigen::VectorXd source_field() const {
    Eigen::VectorXd f(grid.cell_count());
    for (int l = 0; l < grid.cell_count(); ++l) f[l] = source_at(grid.cell_center(l).y());
    return f;
  }
};

struct DarcySolveReport {
  int cg_iterations = 0;
  double cg_residual = 0.0;
};

namespace detail {

/// Five-point operator of the cell-centered scheme with harmonic face
/// permeabilities and half-cell Dirichlet elimination on the bottom edge.
struct DarcyOperator {
  int n = 0;
  Eigen::VectorXd diag, east, north;  // east[l] couples l and l+1, north[l] couples l and l+n

  // east[l] is zero on the last cell of each row, so the shifted products
  // never couple across row boundaries.
  void apply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const {
    const int cells = n * n;
    y.noalias() = diag.cwiseProduct(x);
    y.head(cells - 1).array() -= east.head(cells - 1).array() * x.tail(cells - 1).array();
    y.tail(cells - 1).array() -= east.head(cells - 1).array() * x.head(cells - 1).array();
    y.head(cells - n).array() -= north.head(cells - n).array() * x.tail(cells - n).array();
    y.tail(cells - n).array() -= north.head(cells - n).array() * x.head(cells - n).array();
  }
};

inline double harmonic(double ka, double kb) { return 2.0 * ka * kb / (ka + kb); }

}  // namespace detail

/// General driver used by both the benchmark and verification problems:
/// per-cell source F, per-cell Dirichlet values along y = 0 and per-cell
/// inflow values along x = 0. Solved by Jacobi-preconditioned conjugate
/// gradients to a 1e-10 relative residual.
inline Eigen::VectorXd darcy_solve_general(const GridSpec& grid, const Eigen::VectorXd& k,
                                           const Eigen::VectorXd& source,
                                           const Eigen::VectorXd& bottom_dirichlet,
                                           const Eigen::VectorXd& left_influx,
                                           DarcySolveReport* report = nullptr) {
  const int n = grid.cells_per_side;
  const int cells = grid.cell_count();
  if (n < 2) throw std::invalid_argument("darcy_solve: grid must have at least 2 cells per side");
  if (k.size() != cells || source.size() != cells)
    throw std::invalid_argument("darcy_solve: field size mismatch");
  if (bottom_dirichlet.size() != n || left_influx.size() != n)
    throw std::invalid_argument("darcy_solve: boundary data size mismatch");
  if ((k.array() <= 0.0).any())
    throw std::invalid_argument("darcy_solve: permeability must be positive");

  const double dx = grid.dx();
  detail::DarcyOperator op;
  op.n = n;
  op.diag = Eigen::VectorXd::Zero(cells);
  op.east = Eigen::VectorXd::Zero(cells);
  op.north = Eigen::VectorXd::Zero(cells);
  Eigen::VectorXd b = source * (dx * dx);

  for (int l = 0; l < cells; ++l) {
    const int ix = l % n;
    const int iy = l / n;
    if (ix < n - 1) {
      const double t = detail::harmonic(k[l], k[l + 1]);
      op.east[l] = t;
      op.diag[l] += t;
      op.diag[l + 1] += t;
    }
    if (iy < n - 1) {
      const double t = detail::harmonic(k[l], k[l + n]);
      op.north[l] = t;
      op.diag[l] += t;
      op.diag[l + n] += t;
    }
    if (iy == 0) {
      const double t = 2.0 * k[l];  // ghost value eliminated at half-cell distance
      op.diag[l] += t;
      b[l] += t * bottom_dirichlet[ix];
    }
    if (ix == 0) b[l] += left_influx[iy] * dx;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Constant(cells, bottom_dirichlet.mean());
  const auto apply = [&op](const Eigen::VectorXd& in, Eigen::VectorXd& out) { op.apply(in, out); };
  const CgResult cg = cg_solve(apply, b, x, op.diag.cwiseInverse(), 1e-10, 50000);
  if (report != nullptr) {
    report->cg_iterations = cg.iterations;
    report->cg_residual = cg.relative_residual;
  }
  return x;
}

inline Eigen::VectorXd darcy_solve(const Eigen::VectorXd& k, double model_error,
                                   const DarcyProblem& problem,
                                   DarcySolveReport* report = nullptr) {
  const int n = problem.grid.cells_per_side;
  const Eigen::VectorXd dirichlet =
      Eigen::VectorXd::Constant(n, problem.dirichlet_pressure);
  const Eigen::VectorXd influx =
      Eigen::VectorXd::Constant(n, problem.influx_base * (1.0 + model_error));
  return darcy_solve_general(problem.grid, k, problem.source_field(), dirichlet, influx, report);
}

/// Mollified point observation of the pressure field. In `literal` mode the
/// discrete Gaussian-kernel sum is evaluated exactly as written, including
/// its 1 / (2 pi sigma^2) prefactor and dx^2 quadrature weight; its scale
/// then depends on how the well sits relative to cell centers once
/// sigma << dx. In `normalized` mode the kernel weights are rescaled to sum
/// to one per well, which makes the functional a local average of P and
/// keeps data comparable across grid resolutions.
struct ObservationFunctional {
  enum class Mode { literal, normalized };
  double sigma = 0.01;
  std::vector<Eigen::Vector2d> locations;
  Mode mode = Mode::literal;

  void validate(const GridSpec& grid) const {
    if (!(sigma > 0.0)) throw std::invalid_argument("ObservationFunctional: sigma must be > 0");
    if (locations.empty()) throw std::invalid_argument("ObservationFunctional: no locations");
    for (const auto& p : locations)
      if (!grid.contains(p))
        throw std::invalid_argument("ObservationFunctional: location outside the domain");
  }
};

/// kappa x N^2 matrix applying the observation functional to a pressure field.
inline Eigen::MatrixXd build_observation_operator(const GridSpec& grid,
                                                  const ObservationFunctional& spec) {
  spec.validate(grid);
  const int cells = grid.cell_count();
  const int kappa = static_cast<int>(spec.locations.size());
  const double dx = grid.dx();
  const double inv_two_sigma2 = 1.0 / (2.0 * spec.sigma * spec.sigma);
  Eigen::MatrixXd op(kappa, cells);
  Eigen::VectorXd dist2(cells);
  for (int o = 0; o < kappa; ++o) {
    for (int l = 0; l < cells; ++l)
      dist2[l] = (grid.cell_center(l) - spec.locations[o]).squaredNorm();
    if (spec.mode == ObservationFunctional::Mode::literal) {
      op.row(o) = (-dist2.array() * inv_two_sigma2).exp() * dx * dx /
                  (2.0 * M_PI * spec.sigma * spec.sigma);
    } else {
      // Shift the exponent so the normalization survives sigma << dx.
      const double lo = dist2.minCoeff();
      Eigen::ArrayXd w = (-(dist2.array() - lo) * inv_two_sigma2).exp();
      op.row(o) = w / w.sum();
    }
  }
  return op;
}

inline Eigen::VectorXd observe(const GridSpec& grid, const Eigen::VectorXd& pressure,
                               const ObservationFunctional& spec) {
  if (pressure.size() != grid.cell_count())
    throw std::invalid_argument("observe: pressure field size mismatch");
  return build_observation_operator(grid, spec) * pressure;
}

/// Uniform lattice of wells at the cell centers nearest to an evenly spaced
/// interior grid (side x side wells).
inline std::vector<Eigen::Vector2d> well_lattice(const GridSpec& grid, int side) {
  if (side < 1) throw std::invalid_argument("well_lattice: side must be >= 1");
  std::vector<Eigen::Vector2d> wells;
  wells.reserve(static_cast<std::size_t>(side) * side);
  const int n = grid.cells_per_side;
  const double dx = grid.dx();
  for (int wy = 1; wy <= side; ++wy) {
    for (int wx = 1; wx <= side; ++wx) {
      const double x = grid.domain_size * wx / (side + 1.0);
      const double y = grid.domain_size * wy / (side + 1.0);
      const int ix = std::min(n - 1, std::max(0, static_cast<int>(x / dx)));
      const int iy = std::min(n - 1, std::max(0, static_cast<int>(y / dx)));
      wells.push_back(grid.cell_center(iy * n + ix));
    }
  }
  return wells;
}

struct SyntheticObservations {
  ObservationSet obs;
  Eigen::VectorXd truth_coefficients;  // KL coefficients of the truth
  Eigen::VectorXd truth_log_k;         // on the fine grid
  Eigen::VectorXd truth_pressure;      // on the fine grid
};

/// Synthetic data from the error-free model on the fine grid: the truth is a
/// prior draw from the fine-grid basis, solved with q = 0. The noise level
/// scales R so that the expected noise norm is `noise_level` times the data
/// norm; the realized draw is stored for the discrepancy stopping rule.
inline SyntheticObservations synthesize_observations(const DarcyProblem& fine_problem,
                                                     const KlBasis& fine_basis,
                                                     const ObservationFunctional& spec,
                                                     double noise_level, std::uint64_t seed) {
  if (!(noise_level > 0.0))
    throw std::invalid_argument("synthesize_observations: noise_level must be > 0");
  SyntheticObservations out;

  Rng truth_rng = Rng::stream(seed, 0x7472757468ULL);
  out.truth_coefficients = Eigen::VectorXd(fine_basis.mode_count());
  for (int i = 0; i < fine_basis.mode_count(); ++i) out.truth_coefficients[i] = truth_rng.normal();
  out.truth_log_k = sample_log_permeability(fine_basis, out.truth_coefficients);
  out.truth_pressure = darcy_solve(out.truth_log_k.array().exp(), 0.0, fine_problem);

  const Eigen::VectorXd data =
      build_observation_operator(fine_problem.grid, spec) * out.truth_pressure;
  const int kappa = static_cast<int>(data.size());
  const double sigma = noise_level * data.norm() / std::sqrt(static_cast<double>(kappa));

  Rng noise_rng = Rng::stream(seed, 0x6e6f697365ULL);
  Eigen::VectorXd eta(kappa);
  for (int i = 0; i < kappa; ++i) eta[i] = sigma * noise_rng.normal();

  out.obs.values = data + eta;
  out.obs.locations = spec.locations;
  out.obs.noise_var = Eigen::VectorXd::Constant(kappa, sigma * sigma);
  out.obs.noise_draw = eta;
  return out;
}

}  // namespace ensda

#endif  // ENSDA_MODELS_DARCY_HPP
