/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "ensda/rng.hpp"
#include "ensda/transport.hpp"
#include "support/lp_oracle.hpp"

using ensda::Rng;
using ensda::TransportPlan;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd random_weights(Rng& rng, int m, bool allow_zeros) {
  VectorXd w(m);
  for (int i = 0; i < m; ++i) w[i] = -std::log(1.0 - rng.uniform01());
  if (allow_zeros && m > 2) {
    const int zeros = static_cast<int>(rng.uniform01() * (m - 1));
    for (int z = 0; z < zeros; ++z) w[static_cast<int>(rng.uniform01() * m)] = 0.0;
  }
  const double s = w.sum();
  if (s == 0.0) w[0] = 1.0;
  return w / w.sum();
}

MatrixXd random_point_cost(Rng& rng, int m, int dim) {
  MatrixXd pts(dim, m);
  for (int i = 0; i < dim * m; ++i) pts(i % dim, i / dim) = rng.uniform(-2.0, 2.0);
  return ensda::squared_distance_cost(pts);
}

void check_marginals(const TransportPlan& plan, const VectorXd& w, double tol = 1e-9) {
  const int m = plan.size();
  REQUIRE((plan.entries.array() >= -1e-12).all());
  for (int i = 0; i < m; ++i) REQUIRE(std::abs(plan.entries.row(i).sum() - w[i]) < tol);
  for (int j = 0; j < m; ++j) REQUIRE(std::abs(plan.entries.col(j).sum() - 1.0 / m) < tol);
}

}  // namespace

TEST_CASE("uniform weights give the zero-cost identity coupling") {
  Rng rng = Rng::stream(7);
  const int m = 6;
  const MatrixXd cost = random_point_cost(rng, m, 2);
  const VectorXd w = VectorXd::Constant(m, 1.0 / m);
  const TransportPlan plan = ensda::solve_ot(cost, w);
  check_marginals(plan, w);
  REQUIRE(ensda::transport_cost(cost, plan) < 1e-12);
  REQUIRE((plan.entries - MatrixXd::Identity(m, m) / m).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("one-hot weights force the unique feasible plan") {
  MatrixXd cost(2, 2);
  cost << 0.0, 3.0, 3.0, 0.0;
  VectorXd w(2);
  w << 1.0, 0.0;
  const TransportPlan plan = ensda::solve_ot(cost, w);
  REQUIRE(plan.entries(0, 0) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(plan.entries(0, 1) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(plan.entries.row(1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("solver matches brute-force vertex enumeration for M <= 4") {
  Rng rng = Rng::stream(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = 2 + static_cast<int>(rng.uniform01() * 3);
    const MatrixXd cost = random_point_cost(rng, m, 1 + trial % 3);
    const VectorXd w = random_weights(rng, m, trial % 2 == 0);
    const TransportPlan plan = ensda::solve_ot(cost, w);
    check_marginals(plan, w);
    const double oracle = ensda_tests::transport_vertex_enumeration(cost, w);
    REQUIRE(ensda::transport_cost(cost, plan) == Catch::Approx(oracle).margin(1e-10));
  }
}

TEST_CASE("independent dense simplex agrees with the enumerator") {
  Rng rng = Rng::stream(13);
  for (int trial = 0; trial < 12; ++trial) {
    const int m = 2 + trial % 3;
    const MatrixXd cost = random_point_cost(rng, m, 2);
    const VectorXd w = random_weights(rng, m, false);
    const double by_enum = ensda_tests::transport_vertex_enumeration(cost, w);
    const double by_simplex = ensda_tests::transport_lp_simplex(cost, w);
    REQUIRE(by_simplex == Catch::Approx(by_enum).margin(1e-10));
  }
}

TEST_CASE("solver matches the dense simplex for M = 5, 6") {
  Rng rng = Rng::stream(17);
  for (int trial = 0; trial < 24; ++trial) {
    const int m = 5 + trial % 2;
    const MatrixXd cost = random_point_cost(rng, m, 3);
    const VectorXd w = random_weights(rng, m, trial % 3 == 0);
    const TransportPlan plan = ensda::solve_ot(cost, w);
    check_marginals(plan, w);
    const double oracle = ensda_tests::transport_lp_simplex(cost, w);
    REQUIRE(ensda::transport_cost(cost, plan) == Catch::Approx(oracle).margin(1e-10));
  }
}

TEST_CASE("transform with the identity coupling returns the input") {
  Rng rng = Rng::stream(19);
  const int m = 5;
  MatrixXd states(3, m);
  for (int i = 0; i < states.size(); ++i) states(i / m, i % m) = rng.normal();
  TransportPlan plan;
  plan.entries = MatrixXd::Identity(m, m) / m;
  plan.row_marginal = VectorXd::Constant(m, 1.0 / m);
  plan.col_mass = 1.0 / m;
  REQUIRE((ensda::apply_transport(states, plan) - states).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("one-hot weights copy the selected member to every column") {
  Rng rng = Rng::stream(23);
  const int m = 4;
  MatrixXd states(2, m);
  for (int i = 0; i < states.size(); ++i) states(i / m, i % m) = rng.normal();
  VectorXd w = VectorXd::Zero(m);
  w[2] = 1.0;
  const TransportPlan plan = ensda::solve_ot(ensda::squared_distance_cost(states), w);
  const MatrixXd out = ensda::apply_transport(states, plan);
  for (int j = 0; j < m; ++j)
    REQUIRE((out.col(j) - states.col(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transform preserves the weighted mean") {
  Rng rng = Rng::stream(29);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 5 + trial;
    MatrixXd states(4, m);
    for (int i = 0; i < states.size(); ++i) states(i / m, i % m) = rng.uniform(-3.0, 3.0);
    const VectorXd w = random_weights(rng, m, trial % 2 == 1);
    const TransportPlan plan = ensda::solve_ot(ensda::squared_distance_cost(states), w);
    const VectorXd weighted_mean = states * w;
    const VectorXd out_mean = ensda::apply_transport(states, plan).rowwise().mean();
    const double scale = std::max(1.0, weighted_mean.cwiseAbs().maxCoeff());
    REQUIRE((out_mean - weighted_mean).cwiseAbs().maxCoeff() / scale < 1e-12);
  }
}

TEST_CASE("permuting members and weights permutes the transformed ensemble") {
  Rng rng = Rng::stream(31);
  const int m = 6;
  MatrixXd states(2, m);
  for (int i = 0; i < states.size(); ++i) states(i / m, i % m) = rng.normal();
  const VectorXd w = random_weights(rng, m, false);

  const MatrixXd base =
      ensda::apply_transport(states, ensda::solve_ot(ensda::squared_distance_cost(states), w));

  Eigen::PermutationMatrix<Eigen::Dynamic> perm(m);
  std::vector<int> idx = {3, 0, 5, 1, 4, 2};
  for (int i = 0; i < m; ++i) perm.indices()[i] = idx[i];
  const MatrixXd p_states = states * perm;  // column i holds original member idx[i]
  VectorXd p_w(m);
  for (int i = 0; i < m; ++i) p_w[i] = w[idx[i]];

  const MatrixXd permuted = ensda::apply_transport(
      p_states, ensda::solve_ot(ensda::squared_distance_cost(p_states), p_w));
  REQUIRE((permuted - base * perm).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("1-d sorted solver matches the LP solver") {
  Rng rng = Rng::stream(37);
  for (int trial = 0; trial < 25; ++trial) {
    const int m = 2 + static_cast<int>(rng.uniform01() * 48);
    VectorXd values(m);
    for (int i = 0; i < m; ++i) values[i] = rng.uniform(-5.0, 5.0);
    const VectorXd w = random_weights(rng, m, trial % 2 == 0);
    const TransportPlan fast = ensda::solve_ot_1d(values, w);
    check_marginals(fast, w);
    MatrixXd row = values.transpose();
    const TransportPlan lp = ensda::solve_ot(ensda::squared_distance_cost(row), w);
    const MatrixXd a = ensda::apply_transport(row, fast);
    const MatrixXd b = ensda::apply_transport(row, lp);
    REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("1-d solver: uniform weights give the identity, ties stay feasible") {
  const int m = 6;
  VectorXd values(m);
  values << 1.0, 1.0, 2.0, 2.0, 2.0, 0.5;
  const VectorXd uniform = VectorXd::Constant(m, 1.0 / m);
  const TransportPlan id_plan = ensda::solve_ot_1d(values, uniform);
  check_marginals(id_plan, uniform);
  REQUIRE(ensda::transport_cost(ensda::squared_distance_cost(values.transpose()), id_plan) <
          1e-12);

  Rng rng = Rng::stream(41);
  const VectorXd w = random_weights(rng, m, false);
  check_marginals(ensda::solve_ot_1d(values, w), w);
}

TEST_CASE("entropic solver approaches the exact cost as epsilon shrinks") {
  Rng rng = Rng::stream(43);
  const int m = 8;
  const MatrixXd cost = random_point_cost(rng, m, 2);
  const VectorXd w = random_weights(rng, m, false);
  const double exact = ensda::transport_cost(cost, ensda::solve_ot(cost, w));

  double previous = std::numeric_limits<double>::infinity();
  for (double eps : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3}) {
    ensda::SinkhornOptions opt;
    opt.epsilon = eps;
    opt.max_iter = 200000;
    const TransportPlan plan = ensda::solve_ot_entropic(cost, w, opt);
    check_marginals(plan, w);
    const double c = ensda::transport_cost(cost, plan);
    REQUIRE(c >= exact - 1e-9);
    REQUIRE(c <= previous + 1e-9);
    REQUIRE(c <= exact + eps * 2.0 * std::log(m) + 1e-6);
    previous = c;
  }
}

TEST_CASE("entropic solver: uniform weights stay within the entropy bound") {
  Rng rng = Rng::stream(47);
  const int m = 10;
  const MatrixXd cost = random_point_cost(rng, m, 2);
  const VectorXd w = VectorXd::Constant(m, 1.0 / m);
  ensda::SinkhornOptions opt;
  opt.epsilon = 0.05;
  const TransportPlan plan = ensda::solve_ot_entropic(cost, w, opt);
  check_marginals(plan, w);
  REQUIRE(ensda::transport_cost(cost, plan) <= 0.0 + opt.epsilon * 2.0 * std::log(m) + 1e-9);
}

TEST_CASE("entropic solver handles M = 1 and reports non-convergence") {
  const MatrixXd cost = MatrixXd::Zero(1, 1);
  const VectorXd w = VectorXd::Ones(1);
  const TransportPlan plan = ensda::solve_ot_entropic(cost, w, {});
  REQUIRE(plan.entries(0, 0) == Catch::Approx(1.0));

  Rng rng = Rng::stream(53);
  const MatrixXd big = random_point_cost(rng, 6, 2);
  const VectorXd w6 = random_weights(rng, 6, false);
  ensda::SinkhornOptions strict;
  strict.epsilon = 1e-4;
  strict.max_iter = 3;
  REQUIRE_THROWS_WITH(ensda::solve_ot_entropic(big, w6, strict),
                      Catch::Matchers::ContainsSubstring("no convergence"));
}

TEST_CASE("invalid transport inputs are rejected") {
  MatrixXd cost = MatrixXd::Zero(3, 3);
  VectorXd bad_sum = VectorXd::Constant(3, 1.0);  // sums to 3
  REQUIRE_THROWS_AS(ensda::solve_ot(cost, bad_sum), std::invalid_argument);

  VectorXd negative(3);
  negative << 1.2, -0.1, -0.1;
  REQUIRE_THROWS_AS(ensda::solve_ot(cost, negative), std::invalid_argument);

  MatrixXd not_square = MatrixXd::Zero(3, 2);
  REQUIRE_THROWS_AS(ensda::solve_ot(not_square, VectorXd::Constant(3, 1.0 / 3)),
                    std::invalid_argument);

  MatrixXd infinite = cost;
  infinite(0, 1) = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(ensda::solve_ot(infinite, VectorXd::Constant(3, 1.0 / 3)),
                    std::invalid_argument);

  TransportPlan plan;
  plan.entries = MatrixXd::Identity(4, 4) / 4;
  REQUIRE_THROWS_AS(ensda::apply_transport(MatrixXd::Zero(2, 3), plan), std::invalid_argument);
}
