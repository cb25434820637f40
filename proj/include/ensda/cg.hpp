/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_CG_HPP
#define ENSDA_CG_HPP

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ensda {

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator. `apply` computes y = A x; `inv_diag` is the Jacobi
/// preconditioner. Converges on |b - A x| <= rel_tol * |b|.
template <class Op>
CgResult cg_solve(const Op& apply, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                  const Eigen::VectorXd& inv_diag, double rel_tol, int max_iter) {
  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    x.setZero();
    return {0, 0.0};
  }
  Eigen::VectorXd r(b.size()), q(b.size());
  apply(x, q);
  r = b - q;
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  double res = r.norm() / b_norm;
  int it = 0;
  while (res > rel_tol && it < max_iter) {
    ++it;
    apply(p, q);
    const double alpha = rz / p.dot(q);
    x += alpha * p;
    r -= alpha * q;
    res = r.norm() / b_norm;
    z = inv_diag.cwiseProduct(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (res > rel_tol) {
    std::ostringstream msg;
    msg << "cg_solve: no convergence after " << it << " iterations (relative residual " << res
        << ")";
    throw std::runtime_error(msg.str());
  }
  return {it, res};
}

}  // namespace ensda

#endif  // ENSDA_CG_HPP
