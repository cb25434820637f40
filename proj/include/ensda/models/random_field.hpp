/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_MODELS_RANDOM_FIELD_HPP
#define ENSDA_MODELS_RANDOM_FIELD_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "ensda/grid.hpp"

namespace ensda {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Whittle-Matern correlation (d / delta) K_1(d / delta) between all pairs
/// of cell centers; the d -> 0 limit of x K_1(x) is 1, applied explicitly
/// on the diagonal.
inline MatrixXd whittle_matern_covariance(const GridSpec& grid, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("whittle_matern_covariance: delta must be > 0");
  const int cells = grid.cell_count();
  MatrixXd cov(cells, cells);
  for (int l = 0; l < cells; ++l) {
    const Eigen::Vector2d xl = grid.cell_center(l);
    cov(l, l) = 1.0;
    for (int k = 0; k < l; ++k) {
      const double x = (xl - grid.cell_center(k)).norm() / delta;
      const double v = x * std::cyl_bessel_k(1, x);
      cov(l, k) = v;
      cov(k, l) = v;
    }
  }
  return cov;
}

/// Truncated Karhunen-Loeve basis of the log-permeability field:
/// log k = mean + modes * diag(sqrt(lambda)) * u with orthonormal modes.
/// Coefficients are recovered through the pseudo-inverse the orthonormality
/// provides, so a field-to-coefficients round trip is exact on the
/// retained modes.
struct KlBasis {
  GridSpec grid;
  double delta = 0.5;
  double mean_log = std::log(5.0);
  VectorXd eigenvalues;  // descending, clipped at zero
  MatrixXd modes;        // cells x m_kl, orthonormal columns

  int mode_count() const { return static_cast<int>(eigenvalues.size()); }

  /// log-permeability fields (cells x M) from coefficient columns (m_kl x M).
  MatrixXd to_field(const MatrixXd& coeffs) const {
    if (coeffs.rows() != mode_count()) throw std::invalid_argument("KlBasis: coefficient dim");
    MatrixXd field = modes * (eigenvalues.array().sqrt().matrix().asDiagonal() * coeffs);
    field.array() += mean_log;
    return field;
  }

  /// Coefficients from log-permeability fields; zero-clipped modes map to 0.
  MatrixXd to_coeffs(const MatrixXd& fields) const {
    if (fields.rows() != grid.cell_count()) throw std::invalid_argument("KlBasis: field dim");
    VectorXd inv_sqrt(mode_count());
    for (int i = 0; i < mode_count(); ++i) {
      const double s = std::sqrt(eigenvalues[i]);
      inv_sqrt[i] = s > 1e-14 ? 1.0 / s : 0.0;
    }
    return inv_sqrt.asDiagonal() * (modes.transpose() * (fields.array() - mean_log).matrix());
  }
};

/// Eigendecomposition of the Whittle-Matern covariance, eigenpairs sorted
/// descending, negative roundoff eigenvalues clipped to zero.
inline KlBasis build_kl_basis(const GridSpec& grid, double delta, int m_kl) {
  const int cells = grid.cell_count();
  if (m_kl < 1 || m_kl > cells)
    throw std::invalid_argument("build_kl_basis: m_kl must be in [1, N^2]");
  const MatrixXd cov = whittle_matern_covariance(grid, delta);
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("build_kl_basis: eigendecomposition failed");

  KlBasis basis;
  basis.grid = grid;
  basis.delta = delta;
  basis.eigenvalues = VectorXd(m_kl);
  basis.modes = MatrixXd(cells, m_kl);
  // SelfAdjointEigenSolver sorts ascending.
  for (int i = 0; i < m_kl; ++i) {
    const int src = cells - 1 - i;
    basis.eigenvalues[i] = std::max(0.0, solver.eigenvalues()[src]);
    basis.modes.col(i) = solver.eigenvectors().col(src);
  }
  return basis;
}

inline VectorXd sample_log_permeability(const KlBasis& basis, const VectorXd& u) {
  if (u.size() != basis.mode_count())
    throw std::invalid_argument("sample_log_permeability: coefficient dim");
  return basis.to_field(u);
}

}  // namespace ensda

#endif  // ENSDA_MODELS_RANDOM_FIELD_HPP
