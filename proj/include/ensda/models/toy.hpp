/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_MODELS_TOY_HPP
#define ENSDA_MODELS_TOY_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "ensda/ensemble.hpp"

namespace ensda {

/// Two-component scalar model with multiplicative model error:
/// each component maps (u, q) to q * exp(1 - (9/2) (u - 2 pi / 3)^2).
/// The error-free model has q = 1.
inline double toy_component(double u, double q) {
  const double c = 2.0 * M_PI / 3.0;
  return q * std::exp(1.0 - 4.5 * (u - c) * (u - c));
}

inline Eigen::VectorXd toy_forward(const Eigen::VectorXd& u, const Eigen::VectorXd& q) {
  if (u.size() != 2 || q.size() != 2)
    throw std::invalid_argument("toy_forward: expects two components");
  Eigen::VectorXd y(2);
  y[0] = toy_component(u[0], q[0]);
  y[1] = toy_component(u[1], q[1]);
  return y;
}

/// Benchmark setup: y_obs = 1.8 in both components, noise N(0, 0.001),
/// priors u ~ N(2.4, 1) and q ~ N(1, 0.01) componentwise.
struct ToyProblem {
  static constexpr int param_dim = 2;
  static constexpr int error_dim = 2;

  static ObservationSet observations() {
    ObservationSet obs;
    obs.values = Eigen::Vector2d::Constant(1.8);
    obs.noise_var = Eigen::Vector2d::Constant(0.001);
    return obs;
  }

  static PriorSpec prior() {
    PriorSpec p;
    p.components = {PriorComponent::gaussian(2.4, 1.0), PriorComponent::gaussian(2.4, 1.0),
                    PriorComponent::gaussian(1.0, 0.1), PriorComponent::gaussian(1.0, 0.1)};
    return p;
  }
};

}  // namespace ensda

#endif  // ENSDA_MODELS_TOY_HPP
