/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_TETPF_HPP
#define ENSDA_TETPF_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ensda/ensemble.hpp"
#include "ensda/filter_diagnostics.hpp"
#include "ensda/localization.hpp"
#include "ensda/model.hpp"
#include "ensda/models/random_field.hpp"
#include "ensda/parallel.hpp"
#include "ensda/rng.hpp"
#include "ensda/transport.hpp"

namespace ensda {

struct MutationConfig {
  double beta = 0.02;   // autoregressive step of the prior-preserving proposal
  int tau_max = 20;     // inner iterations (one baseline evaluation + tau_max - 1 sweeps)
  PriorSpec prior;

  void validate(int joint_dim) const {
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("MutationConfig: beta in (0,1)");
    if (tau_max < 1) throw std::invalid_argument("MutationConfig: tau_max >= 1");
    if (prior.dim() != joint_dim) throw std::invalid_argument("MutationConfig: prior dimension");
  }
};

struct TetpfConfig {
  double m_thresh = 0.0;  // effective-sample-size floor, in (1, M)
  MutationConfig mutation;
  int max_iterations = 1000;
  int threads = 1;
  std::uint64_t seed = 0;
  bool entropic = false;          // opt-in approximate transport backend
  SinkhornOptions sinkhorn;
};

struct TemperatureSelection {
  double phi = 0.0;
  bool stalled = false;
};

namespace detail {

constexpr double kMinTemperIncrement = 1e-8;

inline double ess_of_tempered(const Eigen::VectorXd& misfits, double dphi) {
  const double lo = misfits.minCoeff();
  const Eigen::ArrayXd e = (-(0.5 * dphi) * (misfits.array() - lo)).exp();
  const double s = e.sum();
  return s * s / e.square().sum();
}

/// Largest admissible temperature given a monotone admissibility predicate
/// on the increment; bisection to absolute tolerance 1e-8.
inline TemperatureSelection select_temperature_by(
    double phi_prev, const std::function<bool(double)>& admissible) {
  if (phi_prev < 0.0 || phi_prev >= 1.0)
    throw std::invalid_argument("select_temperature: phi_prev must lie in [0, 1)");
  const double full = 1.0 - phi_prev;
  if (admissible(full)) return {1.0, false};
  if (!admissible(kMinTemperIncrement))
    return {phi_prev + kMinTemperIncrement, true};
  double lo = kMinTemperIncrement, hi = full;
  while (hi - lo > kMinTemperIncrement) {
    const double mid = 0.5 * (lo + hi);
    if (admissible(mid))
      lo = mid;
    else
      hi = mid;
  }
  return {phi_prev + lo, false};
}

}  // namespace detail

/// Next temperature: the largest phi in (phi_prev, 1] whose bridging weights
/// keep the effective sample size at or above `m_thresh`. If even the
/// minimum increment fails the threshold, phi_prev + 1e-8 is returned with
/// the stalled flag set.
inline TemperatureSelection select_temperature(const Eigen::VectorXd& misfits, double phi_prev,
                                               double m_thresh) {
  if (!(m_thresh > 1.0) || !(m_thresh < misfits.size()))
    throw std::invalid_argument("select_temperature: m_thresh must lie in (1, M)");
  return detail::select_temperature_by(phi_prev, [&](double dphi) {
    return detail::ess_of_tempered(misfits, dphi) >= m_thresh;
  });
}

/// Localized variant: every cell's local weights must keep their effective
/// sample size above the threshold.
inline TemperatureSelection select_temperature_localized(const Eigen::MatrixXd& local_misfits,
                                                         double phi_prev, double m_thresh) {
  if (!(m_thresh > 1.0) || !(m_thresh < local_misfits.cols()))
    throw std::invalid_argument("select_temperature: m_thresh must lie in (1, M)");
  return detail::select_temperature_by(phi_prev, [&](double dphi) {
    for (int l = 0; l < local_misfits.rows(); ++l) {
      if (detail::ess_of_tempered(local_misfits.row(l).transpose(), dphi) < m_thresh) return false;
    }
    return true;
  });
}

struct MutationResult {
  double acceptance_rate = 1.0;
  long long evaluations = 0;
  long long failures = 0;
};

namespace detail {

/// One Metropolis step of the prior-preserving kernel: Gaussian coordinates
/// move autoregressively in prior-standardized coordinates, uniform ones by
/// a clamped symmetric walk; acceptance uses the bridged likelihood only.
/// Updates (current, misfit) in place; returns whether the proposal was
/// accepted. A throwing evaluation rejects and bumps `failures`.
inline bool pcn_step(Eigen::VectorXd& current, double& misfit, double phi, double beta,
                     const PriorSpec& prior,
                     const std::function<double(const Eigen::VectorXd&)>& misfit_of, Rng& rng,
                     long long& failures) {
  const int dim = static_cast<int>(current.size());
  const double root = std::sqrt(1.0 - beta * beta);
  Eigen::VectorXd proposal(dim);
  for (int c = 0; c < dim; ++c) {
    const PriorComponent& p = prior.components[c];
    if (p.kind == PriorComponent::Kind::gaussian) {
      const double z = (current[c] - p.a) / p.b;
      proposal[c] = p.a + p.b * (root * z + beta * rng.normal());
    } else {
      const double step = rng.uniform(p.a - p.b, p.b - p.a);
      proposal[c] = std::clamp(current[c] + step, p.a, p.b);
    }
  }
  bool ok = true;
  double proposal_misfit = std::numeric_limits<double>::infinity();
  try {
    proposal_misfit = misfit_of(proposal);
  } catch (const std::exception&) {
    ok = false;
    ++failures;
  }
  const double u = rng.uniform01();
  if (ok && u < std::exp(std::min(0.0, -0.5 * phi * (proposal_misfit - misfit)))) {
    current = proposal;
    misfit = proposal_misfit;
    return true;
  }
  return false;
}

}  // namespace detail

/// Metropolis rejuvenation targeting the tempered posterior h(v)^phi pi(v).
///
/// Gaussian-prior coordinates move by the prior-preserving autoregressive
/// proposal applied in prior-standardized coordinates; uniform-prior
/// coordinates take a symmetric walk projected (clamped) onto the support.
/// The acceptance ratio then involves only the bridged likelihood and is
/// evaluated in log (misfit) space.
///
/// The first inner iteration evaluates the current (freshly transformed)
/// ensemble, the remaining tau_max - 1 sweep proposals, so the whole call
/// costs exactly tau_max * M model evaluations. A proposal whose evaluation
/// throws is rejected and counted.
inline MutationResult pcn_mutate(Ensemble& ens, Eigen::VectorXd& misfits, double phi,
                                 const MutationConfig& cfg,
                                 const std::function<double(const Eigen::VectorXd&)>& misfit_of,
                                 std::uint64_t seed, std::uint64_t iteration, int threads) {
  const int m_count = ens.size();
  const int dim = ens.param_dim() + ens.error_dim();
  cfg.validate(dim);
  if (!(phi > 0.0) || phi > 1.0) throw std::invalid_argument("pcn_mutate: phi must lie in (0, 1]");

  misfits.resize(m_count);
  std::vector<long long> accepted(m_count, 0), failed(m_count, 0);

  parallel_for(static_cast<std::size_t>(m_count), threads, [&](std::size_t idx) {
    const int i = static_cast<int>(idx);
    Rng rng = Rng::stream(seed, iteration, static_cast<std::uint64_t>(i), 0x6d7574ULL);
    Eigen::VectorXd current = ens.members().col(i);
    double misfit;
    try {
      misfit = misfit_of(current);
    } catch (const std::exception&) {
      misfit = std::numeric_limits<double>::infinity();
      ++failed[i];
    }
    for (int sweep = 1; sweep < cfg.tau_max; ++sweep) {
      if (detail::pcn_step(current, misfit, phi, cfg.beta, cfg.prior, misfit_of, rng, failed[i]))
        ++accepted[i];
    }
    ens.members().col(i) = current;
    misfits[i] = misfit;
  });

  MutationResult result;
  result.evaluations = static_cast<long long>(m_count) * cfg.tau_max;
  for (int i = 0; i < m_count; ++i) result.failures += failed[i];
  const long long proposals = static_cast<long long>(m_count) * (cfg.tau_max - 1);
  long long total_accepted = 0;
  for (int i = 0; i < m_count; ++i) total_accepted += accepted[i];
  result.acceptance_rate =
      proposals > 0 ? static_cast<double>(total_accepted) / static_cast<double>(proposals) : 1.0;
  return result;
}

/// Tempered ensemble transform particle filter: per iteration, evaluate the
/// model on every member, pick the next temperature adaptively, resample
/// deterministically through the minimizing coupling of the joint-state
/// squared-distance cost, and rejuvenate by mutation. Stops when the
/// temperature reaches one; the number of iterations is found on the fly.
/// Costs exactly T * M * (tau_max + 1) model evaluations.
inline AssimilationResult tetpf_assimilate(const Ensemble& initial, const ForwardModel& model,
                                           const ObservationSet& obs, const TetpfConfig& cfg) {
  obs.validate();
  cfg.mutation.validate(initial.param_dim() + initial.error_dim());
  AssimilationResult result{initial, {}};
  Ensemble& ens = result.ensemble;
  FilterDiagnostics& diag = result.diagnostics;
  const int m_count = ens.size();
  const auto misfit_of = make_misfit_fn(model, obs, ens.param_dim());

  double phi = 0.0;
  while (phi < 1.0) {
    if (diag.iterations >= cfg.max_iterations)
      throw FilterAbort("tetpf_assimilate: iteration cap reached (stalled tempering)", diag);
    const int t = ++diag.iterations;

    const Eigen::MatrixXd predictions = evaluate_ensemble(ens, model, obs.dim(), cfg.threads);
    diag.model_evaluations += m_count;
    const Eigen::VectorXd misfits = compute_misfits(predictions, obs);

    const TemperatureSelection sel = select_temperature(misfits, phi, cfg.m_thresh);
    if (sel.stalled) {
      diag.stalled = true;
      diag.warnings.push_back("stalled tempering at iteration " + std::to_string(t));
    }
    const double dphi = sel.phi - phi;
    phi = sel.phi;

    const Eigen::VectorXd w = tempered_weights(misfits, dphi);
    const double ess = effective_sample_size(w);

    const Eigen::MatrixXd cost = squared_distance_cost(ens.members());
    const TransportPlan plan =
        cfg.entropic ? solve_ot_entropic(cost, w, cfg.sinkhorn) : solve_ot(cost, w);
    ens.members() = apply_transport(ens.members(), plan);

    Eigen::VectorXd mutated_misfits;
    const MutationResult mut = pcn_mutate(ens, mutated_misfits, phi, cfg.mutation, misfit_of,
                                          cfg.seed, static_cast<std::uint64_t>(t), cfg.threads);
    diag.model_evaluations += mut.evaluations;
    diag.failed_evaluations += mut.failures;
    diag.tempering.push_back({t, phi, ess, mut.acceptance_rate});
  }

  const long long expected = static_cast<long long>(diag.iterations) * m_count *
                             (cfg.mutation.tau_max + 1);
  if (diag.model_evaluations != expected)
    throw std::logic_error("tetpf_assimilate: model evaluation accounting violated");
  return result;
}

/// Localized field update: each grid cell's log-permeability values are
/// resampled independently with that cell's tapered local weights through
/// the one-dimensional sorted transport.
inline Eigen::MatrixXd tletpf_update_field(const Eigen::MatrixXd& log_k,
                                           const Eigen::MatrixXd& taper,
                                           const Eigen::MatrixXd& misfit_comp, double dphi,
                                           int threads = 1) {
  if (log_k.rows() != taper.rows())
    throw std::invalid_argument("tletpf_update_field: cell count mismatch");
  if (taper.cols() != misfit_comp.rows())
    throw std::invalid_argument("tletpf_update_field: observation count mismatch");
  if (log_k.cols() != misfit_comp.cols())
    throw std::invalid_argument("tletpf_update_field: ensemble size mismatch");

  const Eigen::MatrixXd local_misfits = taper * misfit_comp;  // cells x M
  Eigen::MatrixXd updated(log_k.rows(), log_k.cols());
  parallel_for(static_cast<std::size_t>(log_k.rows()), threads, [&](std::size_t l) {
    const int cell = static_cast<int>(l);
    const Eigen::VectorXd w = tempered_weights(local_misfits.row(cell).transpose(), dphi);
    const TransportPlan plan = solve_ot_1d(log_k.row(cell).transpose(), w);
    updated.row(cell) = apply_transport(log_k.row(cell), plan);
  });
  return updated;
}

/// Model-error update of the localized filter. The model is re-evaluated at
/// the already-updated parameters (the extra evaluation per member in the
/// T M (tau_max + 2) cost), the joint weights are re-derived, and the scalar
/// error is resampled under the joint parameter/error squared-distance cost.
inline Eigen::MatrixXd tletpf_update_model_error(const Eigen::MatrixXd& u_tilde,
                                                 const Eigen::MatrixXd& q,
                                                 const ForwardModel& model,
                                                 const ObservationSet& obs, double dphi,
                                                 int threads = 1,
                                                 long long* eval_counter = nullptr) {
  if (q.rows() != 1)
    throw std::invalid_argument(
        "tletpf_update_model_error: only a scalar model error is supported");
  if (u_tilde.cols() != q.cols())
    throw std::invalid_argument("tletpf_update_model_error: ensemble size mismatch");
  const int m_count = static_cast<int>(q.cols());

  Eigen::MatrixXd predictions(obs.dim(), m_count);
  parallel_for(static_cast<std::size_t>(m_count), threads, [&](std::size_t i) {
    predictions.col(static_cast<int>(i)) =
        model(u_tilde.col(static_cast<int>(i)), q.col(static_cast<int>(i)));
  });
  if (eval_counter != nullptr) *eval_counter += m_count;

  const Eigen::VectorXd misfits = compute_misfits(predictions, obs);
  const Eigen::VectorXd w = tempered_weights(misfits, dphi);

  Eigen::MatrixXd joint(u_tilde.rows() + 1, m_count);
  joint.topRows(u_tilde.rows()) = u_tilde;
  joint.bottomRows(1) = q;
  const TransportPlan plan = solve_ot(squared_distance_cost(joint), w);
  return apply_transport(q, plan);
}

struct TletpfConfig : TetpfConfig {
  const KlBasis* basis = nullptr;
  const Eigen::MatrixXd* taper = nullptr;
};

/// Localized tempered filter: parameters are mapped to the grid-based
/// log-permeability, updated cell by cell, mapped back through the basis
/// pseudo-inverse, followed by the model-error update and mutation.
/// Costs exactly T * M * (tau_max + 2) model evaluations.
inline AssimilationResult tletpf_assimilate(const Ensemble& initial, const ForwardModel& model,
                                            const ObservationSet& obs, const TletpfConfig& cfg) {
  obs.validate();
  cfg.mutation.validate(initial.param_dim() + initial.error_dim());
  if (cfg.basis == nullptr || cfg.taper == nullptr)
    throw std::invalid_argument("tletpf_assimilate: basis and taper are required");
  if (initial.error_dim() != 1)
    throw std::invalid_argument("tletpf_assimilate: scalar model error required");
  if (cfg.taper->rows() != cfg.basis->grid.cell_count() || cfg.taper->cols() != obs.dim())
    throw std::invalid_argument("tletpf_assimilate: taper shape mismatch");

  AssimilationResult result{initial, {}};
  Ensemble& ens = result.ensemble;
  FilterDiagnostics& diag = result.diagnostics;
  const int m_count = ens.size();
  const auto misfit_of = make_misfit_fn(model, obs, ens.param_dim());

  double phi = 0.0;
  while (phi < 1.0) {
    if (diag.iterations >= cfg.max_iterations)
      throw FilterAbort("tletpf_assimilate: iteration cap reached (stalled tempering)", diag);
    const int t = ++diag.iterations;

    const Eigen::MatrixXd predictions = evaluate_ensemble(ens, model, obs.dim(), cfg.threads);
    diag.model_evaluations += m_count;
    const Eigen::MatrixXd components = misfit_components(predictions, obs);
    const Eigen::MatrixXd local_misfits = *cfg.taper * components;

    const TemperatureSelection sel = select_temperature_localized(local_misfits, phi, cfg.m_thresh);
    if (sel.stalled) {
      diag.stalled = true;
      diag.warnings.push_back("stalled tempering at iteration " + std::to_string(t));
    }
    const double dphi = sel.phi - phi;
    phi = sel.phi;

    double min_ess = static_cast<double>(m_count);
    for (int l = 0; l < local_misfits.rows(); ++l)
      min_ess = std::min(min_ess,
                         detail::ess_of_tempered(local_misfits.row(l).transpose(), dphi));

    Eigen::MatrixXd log_k = cfg.basis->to_field(ens.params());
    log_k = tletpf_update_field(log_k, *cfg.taper, components, dphi, cfg.threads);
    ens.params() = cfg.basis->to_coeffs(log_k);

    ens.model_error() = tletpf_update_model_error(ens.params(), ens.model_error(), model, obs,
                                                  dphi, cfg.threads, &diag.model_evaluations);

    Eigen::VectorXd mutated_misfits;
    const MutationResult mut = pcn_mutate(ens, mutated_misfits, phi, cfg.mutation, misfit_of,
                                          cfg.seed, static_cast<std::uint64_t>(t), cfg.threads);
    diag.model_evaluations += mut.evaluations;
    diag.failed_evaluations += mut.failures;
    diag.tempering.push_back({t, phi, min_ess, mut.acceptance_rate});
  }

  const long long expected = static_cast<long long>(diag.iterations) * m_count *
                             (cfg.mutation.tau_max + 2);
  if (diag.model_evaluations != expected)
    throw std::logic_error("tletpf_assimilate: model evaluation accounting violated");
  return result;
}

}  // namespace ensda

#endif  // ENSDA_TETPF_HPP
