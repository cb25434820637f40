/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_RENKF_HPP
#define ENSDA_RENKF_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "ensda/ensemble.hpp"
#include "ensda/filter_diagnostics.hpp"
#include "ensda/model.hpp"
#include "ensda/models/random_field.hpp"
#include "ensda/rng.hpp"

namespace ensda {

/// Ensemble Kalman state with perturbed observations. The perturbations are
/// drawn once at the start and reused every iteration.
struct EnKFState {
  Ensemble ensemble;
  Eigen::MatrixXd perturbed_obs;  // kappa x M
  std::vector<double> mu_trace;
  int iteration = 0;
};

/// Centered cross-products with 1/(M-1) normalization:
/// B_gg (kappa x kappa) and B_vg ((n+m) x kappa).
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> empirical_covariances(
    const Ensemble& ens, const Eigen::MatrixXd& predictions) {
  const int m_count = ens.size();
  if (m_count < 2) throw std::invalid_argument("empirical_covariances: needs M >= 2");
  if (predictions.cols() != m_count)
    throw std::invalid_argument("empirical_covariances: prediction count mismatch");
  const Eigen::MatrixXd g_centered = predictions.colwise() - predictions.rowwise().mean().eval();
  const Eigen::MatrixXd v_centered = ens.members().colwise() - ens.members().rowwise().mean().eval();
  const double norm = 1.0 / (m_count - 1);
  return {norm * (g_centered * g_centered.transpose()),
          norm * (v_centered * g_centered.transpose())};
}

/// First regularization parameter in the doubling sequence mu0, 2 mu0, ...
/// for which
///   mu | R^{1/2} (B_gg + mu R)^{-1} d | >= Omega | R^{-1/2} d |
/// holds, with d the mean innovation.
inline double select_mu(const Eigen::MatrixXd& b_gg, const Eigen::VectorXd& noise_var,
                        const Eigen::VectorXd& mean_innovation, double omega, double mu0) {
  if (!(omega > 0.0 && omega < 1.0)) throw std::invalid_argument("select_mu: Omega in (0, 1)");
  if (!(mu0 > 0.0)) throw std::invalid_argument("select_mu: mu0 must be > 0");
  const Eigen::VectorXd sqrt_r = noise_var.array().sqrt();
  const double rhs = omega * mean_innovation.cwiseQuotient(sqrt_r).norm();
  double mu = mu0;
  double ratio = 0.0;
  for (int trial = 0; trial < 64; ++trial, mu *= 2.0) {
    Eigen::MatrixXd shifted = b_gg;
    shifted.diagonal() += mu * noise_var;
    const Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("select_mu: factorization of B_gg + mu R failed");
    const double lhs = mu * sqrt_r.cwiseProduct(llt.solve(mean_innovation)).norm();
    if (lhs >= rhs) return mu;
    ratio = rhs > 0.0 ? lhs / rhs : 1.0;
  }
  std::ostringstream msg;
  msg << "select_mu: inequality not reached within 64 doublings (final ratio " << ratio << ")";
  throw std::runtime_error(msg.str());
}

/// Kalman update with the regularized innovation covariance B_gg + mu R:
/// v_i += B_vg (B_gg + mu R)^{-1} (y_i^eta - g_i).
inline void renkf_update(EnKFState& state, const Eigen::MatrixXd& predictions,
                         const Eigen::VectorXd& noise_var, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("renkf_update: mu must be > 0");
  const auto [b_gg, b_vg] = empirical_covariances(state.ensemble, predictions);
  Eigen::MatrixXd shifted = b_gg;
  shifted.diagonal() += mu * noise_var;
  const Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("renkf_update: factorization of B_gg + mu R failed");
  const Eigen::MatrixXd weighted = llt.solve(state.perturbed_obs - predictions);
  state.ensemble.members().noalias() += b_vg * weighted;
}

/// Covariance-localized update: the grid-based log-permeability gain is
/// tapered element-wise, the model-error gain is left untapered, and the
/// parameter coefficients are recovered through the basis pseudo-inverse.
inline void rlenkf_update(EnKFState& state, const Eigen::MatrixXd& predictions,
                          const Eigen::VectorXd& noise_var, double mu,
                          const Eigen::MatrixXd& taper, const KlBasis& basis) {
  if (!(mu > 0.0)) throw std::invalid_argument("rlenkf_update: mu must be > 0");
  const int m_count = state.ensemble.size();
  if (m_count < 2) throw std::invalid_argument("rlenkf_update: needs M >= 2");
  if (taper.rows() != basis.grid.cell_count() || taper.cols() != predictions.rows())
    throw std::invalid_argument("rlenkf_update: taper shape mismatch");

  const Eigen::MatrixXd g_centered = predictions.colwise() - predictions.rowwise().mean().eval();
  const double norm = 1.0 / (m_count - 1);
  Eigen::MatrixXd b_gg = norm * (g_centered * g_centered.transpose());
  b_gg.diagonal() += mu * noise_var;
  const Eigen::LLT<Eigen::MatrixXd> llt(b_gg);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("rlenkf_update: factorization of B_gg + mu R failed");
  const Eigen::MatrixXd weighted = llt.solve(state.perturbed_obs - predictions);

  Eigen::MatrixXd log_k = basis.to_field(state.ensemble.params());
  const Eigen::MatrixXd lk_centered = log_k.colwise() - log_k.rowwise().mean().eval();
  const Eigen::MatrixXd gain_lk = (norm * (lk_centered * g_centered.transpose())).cwiseProduct(taper);
  log_k.noalias() += gain_lk * weighted;
  state.ensemble.params() = basis.to_coeffs(log_k);

  const Eigen::MatrixXd q = state.ensemble.model_error();
  const Eigen::MatrixXd q_centered = q.colwise() - q.rowwise().mean().eval();
  const Eigen::MatrixXd b_qg = norm * (q_centered * g_centered.transpose());
  state.ensemble.model_error() = q + b_qg * weighted;
}

/// Discrepancy principle: stop once the whitened mean innovation drops to
/// 1/Omega times the whitened norm of the realized observation noise.
inline bool discrepancy_stop(const Eigen::VectorXd& mean_innovation,
                             const Eigen::VectorXd& noise_var, const Eigen::VectorXd& noise,
                             double omega) {
  if (!(omega > 0.0 && omega < 1.0)) throw std::invalid_argument("discrepancy_stop: Omega in (0, 1)");
  const Eigen::VectorXd inv_sqrt = noise_var.array().rsqrt();
  return mean_innovation.cwiseProduct(inv_sqrt).norm() <=
         noise.cwiseProduct(inv_sqrt).norm() / omega;
}

struct RenkfConfig {
  double omega = 0.7;
  double mu0 = 1.0;
  int max_iterations = 1000;
  int threads = 1;
  std::uint64_t seed = 0;
  const Eigen::MatrixXd* taper = nullptr;  // enables the localized update
  const KlBasis* basis = nullptr;
  // Stagnation guard: on strongly nonlinear problems the ensemble regression
  // can reach a fixed point with the innovation still above the discrepancy
  // threshold. Stop (with a warning) once the relative innovation
  // improvement stays below `stagnation_tol` for `stagnation_patience`
  // consecutive sweeps.
  double stagnation_tol = 1e-3;
  int stagnation_patience = 2;
};

/// Regularized EnKF loop. Every iteration evaluates the model on all
/// members, checks the discrepancy principle on the mean innovation, and
/// otherwise performs one regularized update with the adaptively chosen mu.
/// The iteration count T is the number of evaluation sweeps; after the loop
/// one extra evaluation at the ensemble mean records the final innovation,
/// so the run costs exactly T * M + 1 model evaluations.
inline AssimilationResult renkf_assimilate(const Ensemble& initial, const ForwardModel& model,
                                           const ObservationSet& obs, const RenkfConfig& cfg) {
  obs.validate();
  if ((cfg.taper != nullptr) != (cfg.basis != nullptr))
    throw std::invalid_argument("renkf_assimilate: localization needs both taper and basis");

  EnKFState state{initial, {}, {}, 0};
  const int m_count = initial.size();
  const int kappa = obs.dim();

  state.perturbed_obs.resize(kappa, m_count);
  const Eigen::VectorXd noise_std = obs.noise_var.array().sqrt();
  for (int i = 0; i < m_count; ++i) {
    Rng rng = Rng::stream(cfg.seed, 0x70657274ULL, static_cast<std::uint64_t>(i));
    for (int l = 0; l < kappa; ++l)
      state.perturbed_obs(l, i) = obs.values[l] + noise_std[l] * rng.normal();
  }

  FilterDiagnostics diag;
  const Eigen::VectorXd noise_draw = obs.realized_noise();
  const Eigen::VectorXd inv_sqrt = obs.noise_var.array().rsqrt();
  const double stop_threshold = noise_draw.cwiseProduct(inv_sqrt).norm() / cfg.omega;

  bool stopped = false;
  double previous_innovation = std::numeric_limits<double>::infinity();
  int stagnant_sweeps = 0;
  while (diag.iterations < cfg.max_iterations) {
    const int t = ++diag.iterations;
    state.iteration = t;
    const Eigen::MatrixXd predictions =
        evaluate_ensemble(state.ensemble, model, kappa, cfg.threads);
    diag.model_evaluations += m_count;

    const Eigen::VectorXd mean_innovation = obs.values - predictions.rowwise().mean();
    const double innovation_norm = mean_innovation.cwiseProduct(inv_sqrt).norm();
    if (discrepancy_stop(mean_innovation, obs.noise_var, noise_draw, cfg.omega)) {
      diag.regularization.push_back(
          {t, std::numeric_limits<double>::quiet_NaN(), innovation_norm, stop_threshold});
      stopped = true;
      break;
    }
    if (innovation_norm > previous_innovation * (1.0 - cfg.stagnation_tol)) {
      if (++stagnant_sweeps >= cfg.stagnation_patience) {
        diag.regularization.push_back(
            {t, std::numeric_limits<double>::quiet_NaN(), innovation_norm, stop_threshold});
        diag.warnings.push_back("stopped by the stagnation guard at iteration " +
                                std::to_string(t) + " with innovation above the discrepancy threshold");
        diag.stalled = true;
        stopped = true;
        break;
      }
    } else {
      stagnant_sweeps = 0;
    }
    previous_innovation = innovation_norm;

    const auto [b_gg, b_vg] = empirical_covariances(state.ensemble, predictions);
    (void)b_vg;
    const double mu = select_mu(b_gg, obs.noise_var, mean_innovation, cfg.omega, cfg.mu0);
    state.mu_trace.push_back(mu);
    diag.mu_trace.push_back(mu);
    diag.regularization.push_back({t, mu, innovation_norm, stop_threshold});

    if (cfg.taper != nullptr)
      rlenkf_update(state, predictions, obs.noise_var, mu, *cfg.taper, *cfg.basis);
    else
      renkf_update(state, predictions, obs.noise_var, mu);
  }

  // Final check at the ensemble mean, recorded in the diagnostics.
  const Eigen::VectorXd mean_member = ensemble_mean(state.ensemble);
  const Eigen::VectorXd mean_prediction = model(
      mean_member.head(initial.param_dim()), mean_member.tail(initial.error_dim()));
  diag.model_evaluations += 1;
  diag.final_innovation = (obs.values - mean_prediction).cwiseProduct(inv_sqrt).norm();

  if (!stopped)
    throw FilterAbort("renkf_assimilate: iteration cap reached before the discrepancy stop",
                      diag);
  return {std::move(state.ensemble), std::move(diag)};
}

}  // namespace ensda

#endif  // ENSDA_RENKF_HPP
