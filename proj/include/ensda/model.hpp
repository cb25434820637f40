/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_MODEL_HPP
#define ENSDA_MODEL_HPP

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>

#include "ensda/ensemble.hpp"
#include "ensda/parallel.hpp"

namespace ensda {

/// Deterministic forward map g(u, q) into observation space.
using ForwardModel = std::function<Eigen::VectorXd(const Eigen::VectorXd& u,
                                                   const Eigen::VectorXd& q)>;

/// Evaluate the model on every member (shared-nothing parallel map).
inline Eigen::MatrixXd evaluate_ensemble(const Ensemble& ens, const ForwardModel& model,
                                         int obs_dim, int threads) {
  Eigen::MatrixXd predictions(obs_dim, ens.size());
  parallel_for(static_cast<std::size_t>(ens.size()), threads, [&](std::size_t i) {
    const Eigen::VectorXd y =
        model(ens.params().col(static_cast<int>(i)), ens.model_error().col(static_cast<int>(i)));
    if (y.size() != obs_dim) throw std::runtime_error("evaluate_ensemble: model output dim");
    predictions.col(static_cast<int>(i)) = y;
  });
  return predictions;
}

/// Misfit of a single joint member v = [u q] against the observations.
/// The model and observations are captured by value so the returned closure
/// outlives any temporaries at the call site.
inline std::function<double(const Eigen::VectorXd&)> make_misfit_fn(ForwardModel model,
                                                                    ObservationSet obs,
                                                                    int param_dim) {
  return [model = std::move(model), obs = std::move(obs), param_dim](const Eigen::VectorXd& v) {
    const Eigen::VectorXd d = model(v.head(param_dim), v.tail(v.size() - param_dim)) - obs.values;
    return d.cwiseQuotient(obs.noise_var).dot(d);
  };
}

}  // namespace ensda

#endif  // ENSDA_MODEL_HPP
