/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_HARNESS_ORACLES_HPP
#define ENSDA_HARNESS_ORACLES_HPP

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "ensda/model.hpp"
#include "ensda/models/toy.hpp"
#include "ensda/parallel.hpp"
#include "ensda/stats.hpp"
#include "ensda/tetpf.hpp"

namespace ensda {

/// Dense tensor-product quadrature of prior x likelihood for one component
/// of the toy problem (the two components are independent and identical).
/// The grid spans +/- 8 prior standard deviations per axis.
struct BayesGridOracle {
  Eigen::VectorXd u_points, q_points;
  Eigen::MatrixXd density;  // cell masses, normalized to 1

  static BayesGridOracle build(int resolution) {
    if (resolution < 100) throw std::invalid_argument("BayesGridOracle: resolution >= 100");
    BayesGridOracle oracle;
    const double u_mean = 2.4, u_std = 1.0, q_mean = 1.0, q_std = 0.1;
    const double y = 1.8, noise_var = 0.001;
    const double span = 8.0;
    oracle.u_points.resize(resolution);
    oracle.q_points.resize(resolution);
    const double u_lo = u_mean - span * u_std, u_hi = u_mean + span * u_std;
    const double q_lo = q_mean - span * q_std, q_hi = q_mean + span * q_std;
    for (int i = 0; i < resolution; ++i) {
      oracle.u_points[i] = u_lo + (i + 0.5) * (u_hi - u_lo) / resolution;
      oracle.q_points[i] = q_lo + (i + 0.5) * (q_hi - q_lo) / resolution;
    }
    oracle.density.resize(resolution, resolution);
    for (int i = 0; i < resolution; ++i) {
      const double u = oracle.u_points[i];
      const double prior_u = std::exp(-0.5 * (u - u_mean) * (u - u_mean) / (u_std * u_std));
      for (int j = 0; j < resolution; ++j) {
        const double q = oracle.q_points[j];
        const double prior_q = std::exp(-0.5 * (q - q_mean) * (q - q_mean) / (q_std * q_std));
        const double d = toy_component(u, q) - y;
        oracle.density(i, j) = prior_u * prior_q * std::exp(-0.5 * d * d / noise_var);
      }
    }
    oracle.density /= oracle.density.sum();
    return oracle;
  }

  Eigen::VectorXd u_marginal() const { return density.rowwise().sum(); }
  Eigen::VectorXd q_marginal() const { return density.colwise().sum().transpose(); }

  /// Marginal mass integrated into histogram bins (same clamping convention
  /// as Histogram::build).
  Eigen::VectorXd binned_marginal(bool over_u, double lo, double hi, int bins) const {
    const Eigen::VectorXd& points = over_u ? u_points : q_points;
    const Eigen::VectorXd marginal = over_u ? u_marginal() : q_marginal();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(bins);
    const double width = (hi - lo) / bins;
    for (int i = 0; i < points.size(); ++i) {
      int b = static_cast<int>((points[i] - lo) / width);
      b = std::clamp(b, 0, bins - 1);
      out[b] += marginal[i];
    }
    return out;
  }

  double mode_u() const {
    int arg = 0;
    u_marginal().maxCoeff(&arg);
    return u_points[arg];
  }
};

struct McmcConfig {
  int n_chains = 4;
  long chain_length = 20000;
  long burn_in = 5000;
  long thinning = 10;
  double beta = 0.045;
  int threads = 1;
  std::uint64_t seed = 1;
};

struct McmcResult {
  Eigen::MatrixXd samples;  // (n + m) x pooled sample count
  double acceptance_rate = 0.0;
  long long model_evaluations = 0;
  std::vector<std::string> warnings;
};

/// Independent prior-preserving MCMC chains targeting the full posterior,
/// using the same Metropolis kernel as the filters' mutation at phi = 1.
/// Chains are initialized from the prior and pooled after burn-in and
/// thinning. A pooled acceptance rate outside [0.05, 0.6] is flagged.
inline McmcResult pcn_mcmc_reference(const ForwardModel& model, const ObservationSet& obs,
                                     const PriorSpec& prior, int param_dim,
                                     const McmcConfig& cfg) {
  obs.validate();
  if (cfg.chain_length <= cfg.burn_in)
    throw std::invalid_argument("pcn_mcmc_reference: chain length must exceed burn-in");
  const long kept_per_chain = (cfg.chain_length - cfg.burn_in) / cfg.thinning;
  if (kept_per_chain < 1) throw std::invalid_argument("pcn_mcmc_reference: nothing kept");
  const int dim = prior.dim();
  const auto misfit_of = make_misfit_fn(model, obs, param_dim);

  McmcResult result;
  result.samples.resize(dim, cfg.n_chains * kept_per_chain);
  std::vector<long long> accepted(cfg.n_chains, 0);

  parallel_for(static_cast<std::size_t>(cfg.n_chains), cfg.threads, [&](std::size_t c) {
    Rng init_rng = Rng::stream(cfg.seed, 0x636861696eULL, c);
    Eigen::VectorXd state = prior.sample_vector(init_rng);
    long long failures = 0;
    double misfit;
    try {
      misfit = misfit_of(state);
    } catch (const std::exception&) {
      misfit = std::numeric_limits<double>::infinity();
      ++failures;
    }
    Rng rng = Rng::stream(cfg.seed, 0x73746570ULL, c);
    long written = 0;
    for (long step = 1; step <= cfg.chain_length; ++step) {
      if (detail::pcn_step(state, misfit, 1.0, cfg.beta, prior, misfit_of, rng, failures))
        ++accepted[c];
      if (step > cfg.burn_in && (step - cfg.burn_in) % cfg.thinning == 0 &&
          written < kept_per_chain) {
        result.samples.col(static_cast<int>(c * kept_per_chain + written)) = state;
        ++written;
      }
    }
  });

  long long total_accepted = 0;
  for (long long a : accepted) total_accepted += a;
  result.acceptance_rate =
      static_cast<double>(total_accepted) / (static_cast<double>(cfg.n_chains) * cfg.chain_length);
  result.model_evaluations = static_cast<long long>(cfg.n_chains) * (cfg.chain_length + 1);
  if (result.acceptance_rate < 0.05 || result.acceptance_rate > 0.6)
    result.warnings.push_back("pcn-MCMC acceptance rate " +
                              std::to_string(result.acceptance_rate) +
                              " outside [0.05, 0.6]; consider adjusting beta");
  return result;
}

}  // namespace ensda

#endif  // ENSDA_HARNESS_ORACLES_HPP
