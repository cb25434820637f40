/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

// End-to-end acceptance suite. Each numbered criterion prints one PASS/FAIL
// line; the process exits nonzero if any criterion fails. Expensive blocks
// (the toy benchmark, the desk-scale Darcy comparison) are run once and
// feed several criteria.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ensda/harness/aggregate.hpp"
#include "ensda/harness/config.hpp"
#include "ensda/harness/experiment.hpp"
#include "ensda/harness/oracles.hpp"
#include "ensda/localization.hpp"
#include "ensda/models/darcy.hpp"
#include "ensda/models/toy.hpp"
#include "ensda/renkf.hpp"
#include "ensda/stats.hpp"
#include "ensda/tetpf.hpp"
#include "support/lp_oracle.hpp"
#include "support/manufactured.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Criterion {
  int number;
  bool passed;
  std::string summary;
};

std::vector<Criterion> g_results;

void record(int number, bool passed, const std::string& summary) {
  g_results.push_back({number, passed, summary});
  std::fprintf(stderr, "  -> criterion %d %s\n", number, passed ? "passed" : "FAILED");
}

double elapsed_s(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
  char buffer[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buffer, sizeof(buffer), format, args);
  va_end(args);
  return std::string(buffer);
}

// ---------------------------------------------------------------- criterion 1
void criterion_transport_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  ensda::Rng rng = ensda::Rng::stream(20260101);
  double worst_cost_gap = 0.0, worst_marginal = 0.0, worst_mean = 0.0;
  bool ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + trial % 5;  // M in {2,...,6}
    MatrixXd pts(3, m);
    for (int i = 0; i < pts.size(); ++i) pts(i % 3, i / 3) = rng.uniform(-2.0, 2.0);
    const MatrixXd cost = ensda::squared_distance_cost(pts);
    VectorXd w(m);
    for (int i = 0; i < m; ++i) w[i] = -std::log(1.0 - rng.uniform01());
    if (trial % 3 == 0 && m > 2) w[trial % m] = 0.0;
    w /= w.sum();

    const ensda::TransportPlan plan = ensda::solve_ot(cost, w);
    // brute force over basic feasible solutions for M <= 4; the independent
    // dense simplex (validated against the enumeration on those instances)
    // for M = 5, 6
    const double oracle = m <= 4 ? ensda_tests::transport_vertex_enumeration(cost, w)
                                 : ensda_tests::transport_lp_simplex(cost, w);
    if (m <= 4) {
      const double cross = ensda_tests::transport_lp_simplex(cost, w);
      if (std::abs(cross - oracle) > 1e-10) ok = false;
    }
    worst_cost_gap =
        std::max(worst_cost_gap, std::abs(ensda::transport_cost(cost, plan) - oracle));
    for (int i = 0; i < m; ++i)
      worst_marginal = std::max(worst_marginal, std::abs(plan.entries.row(i).sum() - w[i]));
    for (int j = 0; j < m; ++j)
      worst_marginal = std::max(worst_marginal, std::abs(plan.entries.col(j).sum() - 1.0 / m));

    const VectorXd weighted_mean = pts * w;
    const VectorXd out_mean = ensda::apply_transport(pts, plan).rowwise().mean();
    const double scale = std::max(1.0, weighted_mean.cwiseAbs().maxCoeff());
    worst_mean = std::max(worst_mean, (out_mean - weighted_mean).cwiseAbs().maxCoeff() / scale);
  }
  const double seconds = elapsed_s(t0);
  ok = ok && worst_cost_gap <= 1e-10 && worst_marginal <= 1e-9 && worst_mean <= 1e-12 &&
       seconds < 10.0;
  record(1, ok,
         fmt("transport exactness: 200 instances, cost gap %.2e (<=1e-10), marginals %.2e "
             "(<=1e-9), mean preservation %.2e (<=1e-12), %.1f s (<10 s)",
             worst_cost_gap, worst_marginal, worst_mean, seconds));
}

// ---------------------------------------------------------------- criterion 2
void criterion_sorted_solver() {
  const auto t0 = std::chrono::steady_clock::now();
  ensda::Rng rng = ensda::Rng::stream(20260202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 2 + static_cast<int>(rng.uniform01() * 48);
    VectorXd values(m);
    for (int i = 0; i < m; ++i) values[i] = rng.uniform(-5.0, 5.0);
    VectorXd w(m);
    for (int i = 0; i < m; ++i) w[i] = -std::log(1.0 - rng.uniform01());
    w /= w.sum();
    const MatrixXd row = values.transpose();
    const MatrixXd fast = ensda::apply_transport(row, ensda::solve_ot_1d(values, w));
    const MatrixXd lp =
        ensda::apply_transport(row, ensda::solve_ot(ensda::squared_distance_cost(row), w));
    worst = std::max(worst, (fast - lp).cwiseAbs().maxCoeff());
  }
  const double seconds = elapsed_s(t0);
  const bool ok = worst <= 1e-8 && seconds < 30.0;
  record(2, ok,
         fmt("1-d solver equivalence: 100 instances M<=50, worst value gap %.2e (<=1e-8), "
             "%.1f s (<30 s)",
             worst, seconds));
}

// ---------------------------------------------------------------- criterion 3
void criterion_gaspari_cohn() {
  const double inner_at_1 = 1.0 - 5.0 / 3.0 + 5.0 / 8.0 + 0.5 - 0.25;
  const double outer_at_1 =
      -2.0 / 3.0 + 4.0 - 5.0 + 5.0 / 3.0 + 5.0 / 8.0 - 0.5 + 1.0 / 12.0;
  bool ok = ensda::gaspari_cohn(0.0) == 1.0;
  ok = ok && std::abs(inner_at_1 - 5.0 / 24.0) <= 1e-12;
  ok = ok && std::abs(outer_at_1 - 5.0 / 24.0) <= 1e-12;
  ok = ok && std::abs(ensda::gaspari_cohn(1.0) - 5.0 / 24.0) <= 1e-12;
  for (double r : {2.0, 2.0001, 3.0, 17.5, 1e6}) ok = ok && ensda::gaspari_cohn(r) == 0.0;
  double previous = ensda::gaspari_cohn(0.0);
  double worst_rise = 0.0;
  for (int i = 1; i <= 10000; ++i) {
    const double v = ensda::gaspari_cohn(2.0 * i / 10000.0);
    worst_rise = std::max(worst_rise, v - previous);
    previous = v;
  }
  ok = ok && worst_rise <= 0.0;
  record(3, ok,
         fmt("gaspari-cohn: rho(0)=1, both branches at r=1 give 5/24, zero for r>=2, "
             "non-increasing on 10^4-point grid (max rise %.1e)",
             worst_rise));
}

// ---------------------------------------------------------------- criterion 4
void criterion_prior_invariance() {
  const int m_count = 2000;
  const int calls = 50;  // 2000 members x 50 snapshots = 1e5 aggregate samples
  const double mean = 2.4, stddev = 1.0;
  MatrixXd members(1, m_count);
  ensda::Rng init = ensda::Rng::stream(20260404);
  for (int i = 0; i < m_count; ++i) members(0, i) = mean + stddev * init.normal();
  ensda::Ensemble ens(members, 1, 0);

  ensda::MutationConfig cfg;
  cfg.beta = 0.02;
  cfg.tau_max = 20;
  cfg.prior.components = {ensda::PriorComponent::gaussian(mean, stddev)};

  double sum = 0.0, sum2 = 0.0;
  long long count = 0;
  VectorXd misfits;
  for (int call = 1; call <= calls; ++call) {
    ensda::pcn_mutate(ens, misfits, 1.0, cfg, [](const VectorXd&) { return 0.0; }, 42,
                      static_cast<std::uint64_t>(call), 1);
    sum += ens.members().row(0).sum();
    sum2 += ens.members().row(0).array().square().sum();
    count += m_count;
  }
  const double sample_mean = sum / count;
  const double sample_var = sum2 / count - sample_mean * sample_mean;
  // members are independent chains; snapshots within a chain are correlated,
  // so the Monte-Carlo error is computed from the member count
  const double se_mean = stddev / std::sqrt(static_cast<double>(m_count));
  const double se_var = stddev * stddev * std::sqrt(2.0 / (m_count - 1));
  const bool ok = count == 100000 && std::abs(sample_mean - mean) <= 3.0 * se_mean &&
                  std::abs(sample_var - stddev * stddev) <= 3.0 * se_var;
  record(4, ok,
         fmt("pcn prior invariance: 1e5 samples, mean %.4f (2.4 +/- %.4f), variance %.4f "
             "(1.0 +/- %.4f)",
             sample_mean, 3.0 * se_mean, sample_var, 3.0 * se_var));
}

// ----------------------------------------------------------- toy block (5, 6)
struct ToyBlock {
  std::vector<double> tetpf_tv_u, tetpf_tv_q, renkf_tv_q;
  std::vector<double> tetpf_iters, renkf_iters;
  std::vector<long long> accounting_violations;
  bool tetpf_modes_ok = false;
  int renkf_mode_count = 0;
  double mode_lo = 0.0, mode_hi = 0.0;
};

ToyBlock run_toy_block() {
  std::fprintf(stderr, "toy block: oracle + 10 seeds of TETPF and REnKF (M = 1000)...\n");
  ToyBlock block;
  const auto oracle = ensda::BayesGridOracle::build(1200);
  const VectorXd oracle_u = oracle.binned_marginal(true, 2.4 - 4.0, 2.4 + 4.0, 50);
  const VectorXd oracle_q = oracle.binned_marginal(false, 1.0 - 0.4, 1.0 + 0.4, 50);

  const auto obs = ensda::ToyProblem::observations();
  const auto prior = ensda::ToyProblem::prior();
  const auto model = [](const VectorXd& u, const VectorXd& q) {
    return ensda::toy_forward(u, q);
  };
  const int m_count = 1000;

  std::vector<double> tetpf_u_all, renkf_u_all;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ensda::Ensemble initial = ensda::draw_initial_ensemble(prior, 2, 2, m_count, seed);

    ensda::TetpfConfig pf_cfg;
    pf_cfg.m_thresh = m_count / 2.0;
    pf_cfg.mutation.beta = 0.02;
    pf_cfg.mutation.tau_max = 20;
    pf_cfg.mutation.prior = prior;
    pf_cfg.seed = seed;
    const auto pf = ensda::tetpf_assimilate(initial, model, obs, pf_cfg);
    block.tetpf_iters.push_back(pf.diagnostics.iterations);
    block.accounting_violations.push_back(
        pf.diagnostics.model_evaluations -
        static_cast<long long>(pf.diagnostics.iterations) * m_count * 21);

    const VectorXd pf_u = pf.ensemble.params().row(0).transpose();
    const VectorXd pf_q = pf.ensemble.model_error().row(0).transpose();
    block.tetpf_tv_u.push_back(ensda::total_variation(
        ensda::Histogram::build(pf_u, 2.4 - 4.0, 2.4 + 4.0, 50).frequencies(), oracle_u));
    block.tetpf_tv_q.push_back(ensda::total_variation(
        ensda::Histogram::build(pf_q, 1.0 - 0.4, 1.0 + 0.4, 50).frequencies(), oracle_q));
    for (int i = 0; i < m_count; ++i) tetpf_u_all.push_back(pf_u[i]);

    ensda::RenkfConfig kf_cfg;
    kf_cfg.omega = 0.7;
    kf_cfg.mu0 = 1.0;
    kf_cfg.seed = seed;
    const auto kf = ensda::renkf_assimilate(initial, model, obs, kf_cfg);
    block.renkf_iters.push_back(kf.diagnostics.iterations);
    block.accounting_violations.push_back(
        kf.diagnostics.model_evaluations -
        (static_cast<long long>(kf.diagnostics.iterations) * m_count + 1));

    const VectorXd kf_q = kf.ensemble.model_error().row(0).transpose();
    block.renkf_tv_q.push_back(ensda::total_variation(
        ensda::Histogram::build(kf_q, 1.0 - 0.4, 1.0 + 0.4, 50).frequencies(), oracle_q));
    const VectorXd kf_u = kf.ensemble.params().row(0).transpose();
    for (int i = 0; i < m_count; ++i) renkf_u_all.push_back(kf_u[i]);
    std::fprintf(stderr, "  seed %llu: TETPF T=%d tv_u=%.3f | REnKF T=%d\n",
                 static_cast<unsigned long long>(seed), pf.diagnostics.iterations,
                 block.tetpf_tv_u.back(), kf.diagnostics.iterations);
  }

  const auto to_vec = [](const std::vector<double>& v) {
    VectorXd out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
    return out;
  };

  // pooled histograms decide the mode structure (prominence-merged peaks)
  const auto pf_hist =
      ensda::Histogram::build(to_vec(tetpf_u_all), 2.4 - 4.0, 2.4 + 4.0, 50);
  const auto pf_modes = ensda::prominent_modes(pf_hist.frequencies(), 0.1, 0.2);
  const double mode_a = 1.7917352878239587, mode_b = 2.397054916962432;
  bool found_a = false, found_b = false;
  for (int b : pf_modes) {
    const double center = pf_hist.bin_center(b);
    if (std::abs(center - mode_a) <= 0.1) found_a = true;
    if (std::abs(center - mode_b) <= 0.1) found_b = true;
  }
  block.tetpf_modes_ok = found_a && found_b;
  block.mode_lo = mode_a;
  block.mode_hi = mode_b;

  const auto kf_hist =
      ensda::Histogram::build(to_vec(renkf_u_all), 2.4 - 4.0, 2.4 + 4.0, 50);
  block.renkf_mode_count =
      static_cast<int>(ensda::prominent_modes(kf_hist.frequencies(), 0.1, 0.2).size());
  return block;
}

double median_of(std::vector<double> values) { return ensda::percentile(std::move(values), 50.0); }
double mean_of(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

// --------------------------------------------------------------- criterion 7
void criterion_darcy_solver() {
  const double e35 = ensda_tests::manufactured_error(35);
  const double e70 = ensda_tests::manufactured_error(70);
  const double e140 = ensda_tests::manufactured_error(140);
  const double order = std::log2(e35 / e140) / 2.0;

  ensda::DarcyProblem problem{ensda::GridSpec(35)};
  ensda::Rng rng = ensda::Rng::stream(20260707);
  VectorXd k(problem.grid.cell_count());
  for (int l = 0; l < k.size(); ++l) k[l] = std::exp(rng.normal());
  const double q = 0.25;
  const VectorXd p = ensda::darcy_solve(k, q, problem);
  const int n = problem.grid.cells_per_side;
  const double dx = problem.grid.dx();
  const double in = problem.source_field().sum() * dx * dx +
                    n * problem.influx_base * (1.0 + q) * dx;
  double out = 0.0;
  for (int ix = 0; ix < n; ++ix) out += 2.0 * k[ix] * (p[ix] - problem.dirichlet_pressure);
  const double balance = std::abs(in - out) / std::abs(in);

  const VectorXd zero_source = VectorXd::Zero(problem.grid.cell_count());
  const VectorXd equilibrium = ensda::darcy_solve_general(
      problem.grid, k, zero_source, VectorXd::Constant(n, 100.0), VectorXd::Zero(n));
  const bool exact_const = (equilibrium.array() == 100.0).all();

  const bool ok = order >= 1.8 && order <= 2.2 && balance <= 1e-8 && exact_const;
  record(7, ok,
         fmt("darcy solver: MMS order %.3f over N in {35,70,140} (2.0 +/- 0.2), mass balance "
             "%.1e (<=1e-8), no-flow equilibrium exact: %s",
             order, balance, exact_const ? "yes" : "no"));
}

// --------------------------------------------------------------- criterion 8
void criterion_kl_machinery() {
  const ensda::GridSpec grid(20, 6.0);
  const int cells = grid.cell_count();
  const MatrixXd cov = ensda::whittle_matern_covariance(grid, 0.5);
  const ensda::KlBasis basis = ensda::build_kl_basis(grid, 0.5, cells);
  const double frob =
      (basis.modes * basis.eigenvalues.asDiagonal() * basis.modes.transpose() - cov).norm();

  const int draws = 10000;
  ensda::Rng rng = ensda::Rng::stream(20260808);
  MatrixXd fields(cells, draws);
  VectorXd u(cells);
  for (int s = 0; s < draws; ++s) {
    for (int i = 0; i < cells; ++i) u[i] = rng.normal();
    fields.col(s) = basis.to_field(u);
  }
  const VectorXd mean = fields.rowwise().mean();
  const MatrixXd centered = fields.colwise() - mean;
  const MatrixXd empirical = centered * centered.transpose() / (draws - 1);
  const double worst_entry = (empirical - cov).cwiseAbs().maxCoeff();

  const bool ok = frob <= 1e-8 && worst_entry <= 0.05;
  record(8, ok,
         fmt("kl machinery: 20x20 reconstruction frobenius %.2e (<=1e-8), monte-carlo "
             "covariance from 1e4 fields entrywise %.4f (<=0.05)",
             frob, worst_entry));
}

// --------------------------------------------- darcy desk block (9, 10, 11)
struct MethodStats {
  std::vector<double> rmse_pressure, rmse_log_k, iterations;
  std::vector<double> q_samples;
};

struct DarcyBlock {
  MethodStats tetpf, tletpf, renkf, rlenkf;
  VectorXd mcmc_q;
  VectorXd reference_mean_log_k, reference_mean_pressure;
  double favored_tletpf_radius = 1.0, favored_rlenkf_radius = 3.0;
  long long accounting_violations = 0;
  double mcmc_acceptance = 0.0;
  int run_count = 0;
};

struct DeskSetup {
  ensda::DarcyProblem coarse{ensda::GridSpec(35)};
  ensda::DarcyProblem fine{ensda::GridSpec(70)};
  ensda::KlBasis coarse_basis, fine_basis;
  ensda::SyntheticObservations synth;
  MatrixXd obs_operator;
  ensda::PriorSpec prior;
  ensda::ForwardModel model;

  VectorXd pressure_of(const VectorXd& u, double q) const {
    return ensda::darcy_solve(coarse_basis.to_field(u).array().exp(), q, coarse);
  }
};

DarcyBlock run_darcy_block(const std::string& cache_dir) {
  std::fprintf(stderr, "darcy desk block: building bases and synthetic data...\n");
  const int m_kl = 100, m_count = 100;
  DeskSetup setup;
  setup.coarse_basis = ensda::build_kl_basis_cached(setup.coarse.grid, 0.5, m_kl, cache_dir);
  setup.fine_basis = ensda::build_kl_basis_cached(setup.fine.grid, 0.5, m_kl, cache_dir);

  const auto wells = ensda::well_lattice(setup.coarse.grid, 7);
  ensda::ObservationFunctional spec{0.01, wells, ensda::ObservationFunctional::Mode::normalized};
  setup.synth = ensda::synthesize_observations(setup.fine, setup.fine_basis, spec, 0.01, 424242);
  setup.obs_operator = ensda::build_observation_operator(setup.coarse.grid, spec);
  setup.prior.components.assign(m_kl, ensda::PriorComponent::gaussian(0.0, 1.0));
  setup.prior.components.push_back(ensda::PriorComponent::uniform(0.0, 0.5));
  setup.model = [&setup](const VectorXd& u, const VectorXd& q) {
    return (setup.obs_operator * setup.pressure_of(u, q[0])).eval();
  };
  const ensda::ObservationSet& obs = setup.synth.obs;

  DarcyBlock block;

  std::fprintf(stderr, "darcy desk block: reference chains...\n");
  ensda::McmcConfig mcfg;
  mcfg.n_chains = 6;
  mcfg.chain_length = 40000;
  mcfg.burn_in = 10000;
  mcfg.thinning = 25;
  mcfg.beta = 0.015;  // keeps the 101-dimensional chain acceptance near 0.15
  mcfg.seed = 1;
  const auto mcmc = ensda::pcn_mcmc_reference(setup.model, obs, setup.prior, m_kl, mcfg);
  block.mcmc_acceptance = mcmc.acceptance_rate;
  block.mcmc_q = mcmc.samples.row(m_kl).transpose();
  block.reference_mean_log_k =
      setup.coarse_basis.to_field(mcmc.samples.topRows(m_kl).rowwise().mean());
  block.reference_mean_pressure = VectorXd::Zero(setup.coarse.grid.cell_count());
  for (int s = 0; s < mcmc.samples.cols(); ++s)
    block.reference_mean_pressure +=
        setup.pressure_of(mcmc.samples.col(s).head(m_kl), mcmc.samples(m_kl, s));
  block.reference_mean_pressure /= static_cast<double>(mcmc.samples.cols());
  std::fprintf(stderr, "  mcmc acceptance %.3f, %ld pooled samples\n", mcmc.acceptance_rate,
               static_cast<long>(mcmc.samples.cols()));

  const auto run_filter = [&](const std::string& method, std::uint64_t seed, double r_loc,
                              MethodStats* stats) {
    const ensda::Ensemble initial =
        ensda::draw_initial_ensemble(setup.prior, m_kl, 1, m_count, seed);
    MatrixXd taper;
    if (method == "tletpf" || method == "rlenkf")
      taper = ensda::build_taper(setup.coarse.grid, wells, r_loc);

    ensda::FilterDiagnostics diag;
    ensda::Ensemble final_ens = initial;
    if (method == "tetpf" || method == "tletpf") {
      ensda::TletpfConfig cfg;
      cfg.m_thresh = m_count / 3.0;
      cfg.mutation.beta = 0.045;
      cfg.mutation.tau_max = 20;
      cfg.mutation.prior = setup.prior;
      cfg.seed = seed;
      if (method == "tletpf") {
        cfg.basis = &setup.coarse_basis;
        cfg.taper = &taper;
        auto result = ensda::tletpf_assimilate(initial, setup.model, obs, cfg);
        block.accounting_violations +=
            std::llabs(result.diagnostics.model_evaluations -
                       static_cast<long long>(result.diagnostics.iterations) * m_count * 22);
        diag = result.diagnostics;
        final_ens = std::move(result.ensemble);
      } else {
        auto result = ensda::tetpf_assimilate(initial, setup.model, obs, cfg);
        block.accounting_violations +=
            std::llabs(result.diagnostics.model_evaluations -
                       static_cast<long long>(result.diagnostics.iterations) * m_count * 21);
        diag = result.diagnostics;
        final_ens = std::move(result.ensemble);
      }
    } else {
      ensda::RenkfConfig cfg;
      cfg.omega = 0.7;
      cfg.mu0 = 1.0;
      cfg.seed = seed;
      if (method == "rlenkf") {
        cfg.taper = &taper;
        cfg.basis = &setup.coarse_basis;
      }
      auto result = ensda::renkf_assimilate(initial, setup.model, obs, cfg);
      block.accounting_violations +=
          std::llabs(result.diagnostics.model_evaluations -
                     (static_cast<long long>(result.diagnostics.iterations) * m_count + 1));
      diag = result.diagnostics;
      final_ens = std::move(result.ensemble);
    }
    ++block.run_count;

    const VectorXd mean_log_k =
        setup.coarse_basis.to_field(final_ens.params().rowwise().mean());
    VectorXd mean_pressure = VectorXd::Zero(setup.coarse.grid.cell_count());
    for (int i = 0; i < m_count; ++i)
      mean_pressure +=
          setup.pressure_of(final_ens.params().col(i), final_ens.model_error()(0, i));
    mean_pressure /= m_count;

    const double err_log_k = ensda::rmse(mean_log_k, block.reference_mean_log_k);
    if (stats != nullptr) {
      stats->rmse_log_k.push_back(err_log_k);
      stats->rmse_pressure.push_back(ensda::rmse(mean_pressure, block.reference_mean_pressure));
      stats->iterations.push_back(diag.iterations);
      for (int i = 0; i < m_count; ++i)
        stats->q_samples.push_back(final_ens.model_error()(0, i));
    }
    std::fprintf(stderr, "  %s seed %llu (r_loc %.0f): T=%d rmse_logk=%.3f rmse_p=%.5f\n",
                 method.c_str(), static_cast<unsigned long long>(seed), r_loc, diag.iterations,
                 err_log_k, ensda::rmse(mean_pressure, block.reference_mean_pressure));
    return err_log_k;
  };

  // small favoring-radius sweep on the first seed, selected by RMSE(log k)
  std::fprintf(stderr, "darcy desk block: localization radius sweep...\n");
  double best = std::numeric_limits<double>::infinity();
  for (double r : {1.0, 2.0, 3.0}) {
    const double err = run_filter("tletpf", 1, r, nullptr);
    if (err < best) {
      best = err;
      block.favored_tletpf_radius = r;
    }
  }
  best = std::numeric_limits<double>::infinity();
  for (double r : {1.0, 2.0, 3.0}) {
    const double err = run_filter("rlenkf", 1, r, nullptr);
    if (err < best) {
      best = err;
      block.favored_rlenkf_radius = r;
    }
  }
  std::fprintf(stderr, "  favored radii: tletpf %.0f, rlenkf %.0f\n",
               block.favored_tletpf_radius, block.favored_rlenkf_radius);

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    run_filter("tletpf", seed, block.favored_tletpf_radius, &block.tletpf);
    run_filter("rlenkf", seed, block.favored_rlenkf_radius, &block.rlenkf);
    run_filter("renkf", seed, 0.0, &block.renkf);
    run_filter("tetpf", seed, 0.0, &block.tetpf);
  }
  return block;
}

double histogram_mode(const std::vector<double>& samples, double lo, double hi, int bins) {
  VectorXd v(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) v[i] = samples[i];
  const auto hist = ensda::Histogram::build(v, lo, hi, bins);
  int arg = 0;
  hist.counts.maxCoeff(&arg);
  return hist.bin_center(arg);
}

// -------------------------------------------------------------- criterion 12
void criterion_determinism(const std::string& configs_dir, const std::string& cli_path,
                           const std::string& work_dir) {
  namespace fs = std::filesystem;
  bool ok = true;
  std::string detail;

  const auto compare_trees = [&](const fs::path& a, const fs::path& b) {
    std::vector<fs::path> rel;
    for (const auto& entry : fs::recursive_directory_iterator(a))
      if (entry.is_regular_file() && entry.path().extension() == ".csv")
        rel.push_back(fs::relative(entry.path(), a));
    if (rel.empty()) return false;
    for (const auto& r : rel) {
      std::ifstream fa(a / r, std::ios::binary), fb(b / r, std::ios::binary);
      if (!fa || !fb) return false;
      std::stringstream sa, sb;
      sa << fa.rdbuf();
      sb << fb.rdbuf();
      if (sa.str() != sb.str()) return false;
    }
    return true;
  };

  for (const std::string name : {"toy_tetpf_small", "toy_renkf_small", "darcy_desk_smoke"}) {
    const std::string cfg_path = configs_dir + "/" + name + ".cfg";
    ensda::ExperimentConfig cfg = ensda::load_config(cfg_path);
    const std::string out_a = work_dir + "/det_a_" + name;
    const std::string out_b = work_dir + "/det_b_" + name;
    fs::remove_all(out_a);
    fs::remove_all(out_b);
    const auto first = ensda::run_experiment(cfg, out_a);
    const auto second = ensda::run_experiment(cfg, out_b);
    const bool same = first.all_completed && second.all_completed &&
                      compare_trees(fs::path(out_a) / cfg.name, fs::path(out_b) / cfg.name);
    if (!same) detail += " " + name + " differs;";
    ok = ok && same;
  }

  // end-to-end through the command-line driver
  bool cli_ok = true;
  if (!cli_path.empty()) {
    const std::string out_a = work_dir + "/det_cli_a";
    const std::string out_b = work_dir + "/det_cli_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);
    for (const std::string& out : {out_a, out_b}) {
      const std::string cmd = cli_path + " run " + configs_dir + "/toy_tetpf_small.cfg --output " +
                              out + " > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) cli_ok = false;
    }
    cli_ok = cli_ok && compare_trees(fs::path(out_a) / "toy_tetpf_small",
                                     fs::path(out_b) / "toy_tetpf_small");
    if (!cli_ok) detail += " cli rerun differs;";
  }
  ok = ok && cli_ok;
  record(12, ok,
         fmt("determinism: shipped configs rerun byte-identically (library and cli paths)%s",
             detail.empty() ? "" : detail.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  std::string configs_dir = "configs";
  std::string cli_path;
  std::string work_dir = "acceptance_out";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--configs") configs_dir = argv[i + 1];
    if (flag == "--cli") cli_path = argv[i + 1];
    if (flag == "--workdir") work_dir = argv[i + 1];
  }
  std::filesystem::create_directories(work_dir);
  const auto t_start = std::chrono::steady_clock::now();

  criterion_transport_exactness();
  criterion_sorted_solver();
  criterion_gaspari_cohn();
  criterion_prior_invariance();
  criterion_darcy_solver();
  criterion_kl_machinery();

  // ----- toy benchmark: criteria 5 and 6
  const ToyBlock toy = run_toy_block();
  {
    const double median_tv_u = median_of(toy.tetpf_tv_u);
    const double median_tv_q_pf = median_of(toy.tetpf_tv_q);
    const double median_tv_q_kf = median_of(toy.renkf_tv_q);
    const bool ok = median_tv_u <= 0.15 && toy.tetpf_modes_ok && toy.renkf_mode_count == 1 &&
                    median_tv_q_kf <= median_tv_q_pf;
    record(5, ok,
           fmt("toy posterior: TETPF median TV(u) %.3f (<=0.15), pooled modes near %.2f and "
               "%.2f: %s, REnKF unimodal: %s (%d mode[s]), median TV(q) REnKF %.3f <= TETPF "
               "%.3f: %s",
               median_tv_u, toy.mode_lo, toy.mode_hi, toy.tetpf_modes_ok ? "yes" : "no",
               toy.renkf_mode_count == 1 ? "yes" : "no", toy.renkf_mode_count, median_tv_q_kf,
               median_tv_q_pf, median_tv_q_kf <= median_tv_q_pf ? "yes" : "no"));
  }
  {
    const double pf_mean = mean_of(toy.tetpf_iters);
    const double kf_mean = mean_of(toy.renkf_iters);
    const bool ok = pf_mean >= 4.0 && pf_mean <= 12.0 && kf_mean >= 5.0 && kf_mean <= 15.0;
    record(6, ok,
           fmt("toy iteration counts: mean TETPF %.1f (in [4,12], paper ~8), mean REnKF %.1f "
               "(in [5,15], paper ~10)",
               pf_mean, kf_mean));
  }

  // ----- desk-scale darcy benchmark: criteria 9 and 10
  const DarcyBlock darcy = run_darcy_block(work_dir + "/cache");
  {
    const double pf_p = median_of(darcy.tletpf.rmse_pressure);
    const double kf_p = median_of(darcy.rlenkf.rmse_pressure);

    std::vector<double> mcmc_q(darcy.mcmc_q.data(), darcy.mcmc_q.data() + darcy.mcmc_q.size());
    const double mode_mcmc = histogram_mode(mcmc_q, -0.25, 0.75, 50);
    const double mode_pf = histogram_mode(darcy.tletpf.q_samples, -0.25, 0.75, 50);
    const double mode_kf = histogram_mode(darcy.rlenkf.q_samples, -0.25, 0.75, 50);
    const bool mode_ok = std::abs(mode_pf - mode_mcmc) < std::abs(mode_kf - mode_mcmc);

    VectorXd kf_q(darcy.rlenkf.q_samples.size());
    for (std::size_t i = 0; i < darcy.rlenkf.q_samples.size(); ++i)
      kf_q[i] = darcy.rlenkf.q_samples[i];
    const double skew_kf = ensda::sample_skewness(kf_q);
    const double skew_mcmc = ensda::sample_skewness(darcy.mcmc_q);
    const bool shape_ok = std::abs(skew_kf) <= 0.4 && std::abs(skew_mcmc) > 0.4;

    const bool ok = pf_p < kf_p && mode_ok && shape_ok;
    record(9, ok,
           fmt("darcy desk: median RMSE(P) TLETPF %.4f < RLEnKF %.4f: %s | q modes (mcmc %.3f) "
               "TLETPF %.3f vs RLEnKF %.3f closer: %s | skewness RLEnKF %.2f (<=0.4) vs MCMC "
               "%.2f (>0.4): %s",
               pf_p, kf_p, pf_p < kf_p ? "yes" : "no", mode_mcmc, mode_pf, mode_kf,
               mode_ok ? "yes" : "no", skew_kf, skew_mcmc, shape_ok ? "yes" : "no"));
  }
  {
    const double t_tetpf = mean_of(darcy.tetpf.iterations);
    const double t_tletpf = mean_of(darcy.tletpf.iterations);
    const double t_renkf = mean_of(darcy.renkf.iterations);
    const double t_rlenkf = mean_of(darcy.rlenkf.iterations);
    const bool ok = t_tletpf < t_tetpf && t_rlenkf >= t_renkf;
    record(10, ok,
           fmt("iteration-count direction: TLETPF %.1f < TETPF %.1f: %s | RLEnKF %.1f >= "
               "REnKF %.1f: %s",
               t_tletpf, t_tetpf, t_tletpf < t_tetpf ? "yes" : "no", t_rlenkf, t_renkf,
               t_rlenkf >= t_renkf ? "yes" : "no"));
  }
  {
    long long toy_violation = 0;
    for (long long v : toy.accounting_violations) toy_violation += std::llabs(v);
    const bool ok = toy_violation == 0 && darcy.accounting_violations == 0;
    record(11, ok,
           fmt("evaluation accounting: closed-form counts exact across %zu toy and %d darcy "
               "runs (total violation %lld)",
               toy.accounting_violations.size(), darcy.run_count,
               toy_violation + darcy.accounting_violations));
  }

  criterion_determinism(configs_dir, cli_path, work_dir);

  std::sort(g_results.begin(), g_results.end(),
            [](const Criterion& a, const Criterion& b) { return a.number < b.number; });
  int failures = 0;
  std::printf("\nacceptance results (%.1f min total):\n", elapsed_s(t_start) / 60.0);
  for (const auto& r : g_results) {
    std::printf("[%s] criterion %2d: %s\n", r.passed ? "PASS" : "FAIL", r.number,
                r.summary.c_str());
    if (!r.passed) ++failures;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(g_results.size()) - failures,
              g_results.size());
  return failures == 0 ? 0 : 1;
}
