/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_TRANSPORT_HPP
#define ENSDA_TRANSPORT_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ensda {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Coupling between a weighted source ensemble and the uniform target
/// ensemble. Row i sums to the source weight w_i, every column sums to 1/M.
struct TransportPlan {
  MatrixXd entries;      // M x M, s_ij >= 0
  VectorXd row_marginal; // target weights w
  double col_mass = 0.0; // 1/M

  int size() const { return static_cast<int>(entries.rows()); }
};

/// Pairwise squared Euclidean distances between the columns of `states`.
inline MatrixXd squared_distance_cost(const MatrixXd& states) {
  const int m_count = static_cast<int>(states.cols());
  VectorXd sq = states.colwise().squaredNorm();
  MatrixXd cost = sq.replicate(1, m_count);
  cost += sq.transpose().replicate(m_count, 1);
  cost.noalias() -= 2.0 * states.transpose() * states;
  cost = cost.cwiseMax(0.0);
  cost.diagonal().setZero();
  return cost;
}

inline double transport_cost(const MatrixXd& cost, const TransportPlan& plan) {
  return (cost.array() * plan.entries.array()).sum();
}

namespace detail {

inline void check_transport_inputs(const MatrixXd& cost, const VectorXd& w) {
  if (cost.rows() != cost.cols()) throw std::invalid_argument("solve_ot: cost must be square");
  if (cost.rows() != w.size()) throw std::invalid_argument("solve_ot: cost/weight size mismatch");
  if (!cost.allFinite()) throw std::invalid_argument("solve_ot: cost entries must be finite");
  if ((w.array() < -1e-12).any()) throw std::invalid_argument("solve_ot: negative weight");
  if (std::abs(w.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("solve_ot: weights must sum to 1");
}

/// Primal network simplex for the dense balanced transportation problem
/// with M sources of mass a_i and M sinks of mass sum(a)/M each.
///
/// The basis is a spanning tree over the 2M bipartite nodes, stored through
/// parent pointers; node 0 (source 0) is the root. Entering arcs are found
/// by block search on reduced costs, with a Bland-rule fallback if a long
/// run of degenerate pivots is ever observed. Final flows are recomputed
/// from the marginals by leaf elimination so that feasibility holds to
/// roundoff regardless of pivot history.
class TransportationSimplex {
 public:
  TransportationSimplex(const MatrixXd& cost, const VectorXd& supply)
      : cost_(cost), a_(supply), size_(static_cast<int>(supply.size())) {
    b_ = supply.sum() / size_;
    nodes_ = 2 * size_;
    parent_.assign(nodes_, -1);
    flow_.assign(nodes_, 0.0);
    potential_.assign(nodes_, 0.0);
    depth_.assign(nodes_, 0);
    order_.reserve(nodes_);
    head_.assign(nodes_, -1);
    next_sibling_.assign(nodes_, -1);
    const double scale = std::max(1.0, cost_.cwiseAbs().maxCoeff());
    tolerance_ = 1e-12 * scale;
  }

  MatrixXd solve() {
    build_initial_basis();
    refresh_tree();

    const long pivot_cap = 2000L * size_ + 200000L;
    const long stall_cap = 10L * size_ + 200L;
    long degenerate_streak = 0;
    bool bland = false;
    bool optimal = false;
    const long arcs = static_cast<long>(size_) * size_;
    const long block = std::max<long>(64, size_);
    long cursor = 0;

    for (long pivot = 0; pivot < pivot_cap; ++pivot) {
      int ei = -1, ej = -1;
      if (!bland) {
        double best = -tolerance_;
        long scanned = 0;
        while (scanned < arcs) {
          const long stop = std::min(arcs, scanned + block);
          for (; scanned < stop; ++scanned) {
            const long idx = (cursor + scanned) % arcs;
            const int i = static_cast<int>(idx / size_);
            const int j = static_cast<int>(idx % size_);
            const double rc = cost_(i, j) - potential_[i] - potential_[size_ + j];
            if (rc < best) {
              best = rc;
              ei = i;
              ej = j;
            }
          }
          if (ei >= 0) break;
        }
        cursor = (cursor + scanned) % arcs;
      } else {
        for (long idx = 0; idx < arcs && ei < 0; ++idx) {
          const int i = static_cast<int>(idx / size_);
          const int j = static_cast<int>(idx % size_);
          if (cost_(i, j) - potential_[i] - potential_[size_ + j] < -tolerance_) {
            ei = i;
            ej = j;
          }
        }
      }
      if (ei < 0) {
        optimal = true;
        break;
      }

      const double theta = run_pivot(ei, ej);
      if (theta <= 1e-15) {
        if (++degenerate_streak > stall_cap) bland = true;
      } else {
        degenerate_streak = 0;
        bland = false;
      }
      refresh_tree();
    }
    if (!optimal) throw std::runtime_error("solve_ot: pivot cap exceeded");

    return extract_plan();
  }

 private:
  int row_node(int i) const { return i; }
  int col_node(int j) const { return size_ + j; }

  /// Northwest-corner start: the staircase of cells forms a path-shaped
  /// spanning tree; ties advance the column so degenerate cells stay basic.
  void build_initial_basis() {
    int i = 0, j = 0;
    double ra = a_[0], cb = b_;
    parent_[row_node(0)] = -1;
    bool first = true;
    while (true) {
      const double alloc = std::min(ra, cb);
      if (first) {
        parent_[col_node(0)] = row_node(0);
        flow_[col_node(0)] = alloc;
        first = false;
      }
      ra -= alloc;
      cb -= alloc;
      if (i == size_ - 1 && j == size_ - 1) break;
      if (j == size_ - 1 || (i < size_ - 1 && ra < cb)) {
        ++i;
        ra = a_[i];
        parent_[row_node(i)] = col_node(j);
        flow_[row_node(i)] = std::min(ra, cb);
      } else {
        ++j;
        cb = b_;
        parent_[col_node(j)] = row_node(i);
        flow_[col_node(j)] = std::min(ra, cb);
      }
    }
  }

  /// Recompute traversal order, depths and potentials from the parent array,
  /// O(nodes) per pivot with preallocated intrusive child lists.
  void refresh_tree() {
    head_.assign(nodes_, -1);
    int root = -1;
    for (int v = nodes_ - 1; v >= 0; --v) {
      const int p = parent_[v];
      if (p < 0) {
        root = v;
      } else {
        next_sibling_[v] = head_[p];
        head_[p] = v;
      }
    }
    order_.clear();
    depth_[root] = 0;
    potential_[root] = 0.0;
    order_.push_back(root);
    for (std::size_t at = 0; at < order_.size(); ++at) {
      const int v = order_[at];
      for (int c = head_[v]; c >= 0; c = next_sibling_[c]) {
        depth_[c] = depth_[v] + 1;
        // Basic arc {c, v} joins a row and a column; its reduced cost is zero.
        const int i = c < size_ ? c : v;
        const int j = c < size_ ? v - size_ : c - size_;
        potential_[c] = cost_(i, j) - potential_[v];
        order_.push_back(c);
      }
    }
  }

  /// Push flow around the unique cycle closed by the entering arc (ei, ej);
  /// returns the amount pushed. Rehangs the cut subtree on the entering arc.
  double run_pivot(int ei, int ej) {
    int x = row_node(ei);
    int y = col_node(ej);

    // Collect paths to the lowest common ancestor.
    std::vector<int> path_x, path_y;
    {
      int px = x, py = y;
      while (px != py) {
        if (depth_[px] >= depth_[py]) {
          path_x.push_back(px);
          px = parent_[px];
        } else {
          path_y.push_back(py);
          py = parent_[py];
        }
      }
    }

    // Arcs at even positions from either endpoint lose flow when the entering
    // arc gains; find the limiting arc, preferring the x side on ties so the
    // choice is deterministic.
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    bool leave_on_x = true;
    for (std::size_t t = 0; t < path_x.size(); t += 2) {
      if (flow_[path_x[t]] <= theta) {
        theta = flow_[path_x[t]];
        leave = path_x[t];
        leave_on_x = true;
      }
    }
    for (std::size_t t = 0; t < path_y.size(); t += 2) {
      if (flow_[path_y[t]] < theta) {
        theta = flow_[path_y[t]];
        leave = path_y[t];
        leave_on_x = false;
      }
    }
    if (leave < 0) throw std::logic_error("solve_ot: no leaving arc (unbalanced problem?)");

    for (std::size_t t = 0; t < path_x.size(); ++t)
      flow_[path_x[t]] += (t % 2 == 0) ? -theta : theta;
    for (std::size_t t = 0; t < path_y.size(); ++t)
      flow_[path_y[t]] += (t % 2 == 0) ? -theta : theta;

    // Reverse parent pointers from the entering endpoint on the cut side up
    // to the leaving arc, carrying arc flows to their new child slots.
    int cur = leave_on_x ? x : y;
    int prev = leave_on_x ? y : x;
    double carried = theta;
    while (true) {
      const int next = parent_[cur];
      const double f = flow_[cur];
      const bool at_leave = (cur == leave);
      parent_[cur] = prev;
      flow_[cur] = carried;
      carried = f;
      prev = cur;
      if (at_leave) break;
      cur = next;
    }
    return theta;
  }

  /// Flows implied by the final tree and the exact marginals, via leaf
  /// elimination in deepest-first order.
  MatrixXd extract_plan() {
    std::vector<double> residual(nodes_);
    for (int i = 0; i < size_; ++i) residual[row_node(i)] = a_[i];
    for (int j = 0; j < size_; ++j) residual[col_node(j)] = b_;
    MatrixXd plan = MatrixXd::Zero(size_, size_);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      const int v = *it;
      const int p = parent_[v];
      if (p < 0) continue;
      const double f = std::max(0.0, residual[v]);
      residual[p] -= f;
      const int i = v < size_ ? v : p;
      const int j = v < size_ ? p - size_ : v - size_;
      plan(i, j) += f;
    }
    return plan;
  }

  const MatrixXd& cost_;
  const VectorXd& a_;
  int size_;
  double b_;
  int nodes_;
  double tolerance_;
  std::vector<int> parent_;
  std::vector<double> flow_;   // flow on the arc {node, parent}
  std::vector<double> potential_;
  std::vector<int> depth_;
  std::vector<int> order_;     // preorder of the current tree
  std::vector<int> head_;      // intrusive child lists, rebuilt per pivot
  std::vector<int> next_sibling_;
};

}  // namespace detail

/// Exact minimizer of sum s_ij cost_ij subject to s_ij >= 0, column sums
/// 1/M and row sums w_i, via primal network simplex.
inline TransportPlan solve_ot(const MatrixXd& cost, const VectorXd& w) {
  detail::check_transport_inputs(cost, w);
  const int m_count = static_cast<int>(w.size());
  VectorXd supply = w.cwiseMax(0.0);
  TransportPlan plan;
  plan.row_marginal = w;
  plan.col_mass = supply.sum() / m_count;
  if (m_count == 1) {
    plan.entries = MatrixXd::Constant(1, 1, supply.sum());
    return plan;
  }
  detail::TransportationSimplex simplex(cost, supply);
  plan.entries = simplex.solve();
  return plan;
}

/// Deterministic ensemble transform: column j of the output is the
/// plan-weighted average M * sum_i x_i s_ij. The column mean of the result
/// equals the weighted source mean exactly.
inline MatrixXd apply_transport(const MatrixXd& states, const TransportPlan& plan) {
  if (states.cols() != plan.entries.rows())
    throw std::invalid_argument("apply_transport: state/plan size mismatch");
  return static_cast<double>(plan.size()) * (states * plan.entries);
}

/// One-dimensional transport solved by sorting: the optimal coupling for a
/// convex cost matches sorted source mass to sorted target mass monotonely,
/// in O(M log M).
inline TransportPlan solve_ot_1d(const VectorXd& values, const VectorXd& w) {
  if (values.size() != w.size()) throw std::invalid_argument("solve_ot_1d: size mismatch");
  if (!values.allFinite()) throw std::invalid_argument("solve_ot_1d: values must be finite");
  if ((w.array() < -1e-12).any()) throw std::invalid_argument("solve_ot_1d: negative weight");
  if (std::abs(w.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("solve_ot_1d: weights must sum to 1");

  const int m_count = static_cast<int>(values.size());
  std::vector<int> order(m_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int p, int q) { return values[p] < values[q]; });

  TransportPlan plan;
  plan.row_marginal = w;
  plan.col_mass = w.sum() / m_count;
  plan.entries = MatrixXd::Zero(m_count, m_count);

  int s = 0, t = 0;
  double rs = w[order[0]];  // remaining source mass
  double rt = plan.col_mass;
  while (true) {
    const double alloc = std::min(rs, rt);
    plan.entries(order[s], order[t]) += alloc;
    rs -= alloc;
    rt -= alloc;
    if (s == m_count - 1 && t == m_count - 1) break;
    if (t == m_count - 1 || (s < m_count - 1 && rs < rt)) {
      ++s;
      rs = w[order[s]];
    } else {
      ++t;
      rt = plan.col_mass;
    }
  }
  return plan;
}

struct SinkhornOptions {
  double epsilon = 1e-2;
  int max_iter = 10000;
  double tol = 1e-7;  // L1 row-marginal violation at convergence
};

namespace detail {

inline double log_sum_exp(const VectorXd& v) {
  const double hi = v.maxCoeff();
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((v.array() - hi).exp().sum());
}

}  // namespace detail

/// Entropically regularized transport (log-domain Sinkhorn). After the dual
/// iteration converges, the plan is rounded onto the marginal polytope with
/// a rank-one correction so that feasibility matches the exact solver's.
inline TransportPlan solve_ot_entropic(const MatrixXd& cost, const VectorXd& w,
                                       const SinkhornOptions& opt = {}) {
  detail::check_transport_inputs(cost, w);
  if (!(opt.epsilon > 0.0)) throw std::invalid_argument("solve_ot_entropic: epsilon must be > 0");
  const int m_count = static_cast<int>(w.size());
  const double neg_inf = -std::numeric_limits<double>::infinity();

  TransportPlan plan;
  plan.row_marginal = w;
  plan.col_mass = w.sum() / m_count;
  if (m_count == 1) {
    plan.entries = MatrixXd::Constant(1, 1, w.sum());
    return plan;
  }

  VectorXd log_a(m_count);
  for (int i = 0; i < m_count; ++i) log_a[i] = w[i] > 0.0 ? std::log(w[i]) : neg_inf;
  const double log_b = std::log(plan.col_mass);

  VectorXd f = VectorXd::Zero(m_count), g = VectorXd::Zero(m_count);
  for (int i = 0; i < m_count; ++i)
    if (log_a[i] == neg_inf) f[i] = neg_inf;

  double violation = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int it = 0; it < opt.max_iter; ++it) {
    for (int i = 0; i < m_count; ++i) {
      if (log_a[i] == neg_inf) continue;
      f[i] = opt.epsilon * (log_a[i] - detail::log_sum_exp((g - cost.row(i).transpose()) / opt.epsilon));
    }
    for (int j = 0; j < m_count; ++j)
      g[j] = opt.epsilon * (log_b - detail::log_sum_exp((f - cost.col(j)) / opt.epsilon));
    // Columns are exact after their update; track the row violation.
    violation = 0.0;
    for (int i = 0; i < m_count; ++i) {
      double row = 0.0;
      if (log_a[i] != neg_inf)
        row = ((f[i] + g.array() - cost.row(i).transpose().array()) / opt.epsilon).exp().sum();
      violation += std::abs(row - w[i]);
    }
    if (violation <= opt.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "solve_ot_entropic: no convergence in " << opt.max_iter
        << " iterations (row-marginal residual " << violation << ")";
    throw std::runtime_error(msg.str());
  }

  MatrixXd entries(m_count, m_count);
  for (int i = 0; i < m_count; ++i) {
    if (log_a[i] == neg_inf) {
      entries.row(i).setZero();
      continue;
    }
    entries.row(i) =
        ((f[i] + g.array() - cost.row(i).transpose().array()) / opt.epsilon).exp().transpose();
  }

  // Rounding of Altschuler et al.: scale rows then columns into the polytope,
  // then fix the leftover mass with a rank-one feasible correction.
  for (int i = 0; i < m_count; ++i) {
    const double rs = entries.row(i).sum();
    if (rs > w[i] && rs > 0.0) entries.row(i) *= w[i] / rs;
  }
  for (int j = 0; j < m_count; ++j) {
    const double cs = entries.col(j).sum();
    if (cs > plan.col_mass && cs > 0.0) entries.col(j) *= plan.col_mass / cs;
  }
  VectorXd err_r = w - entries.rowwise().sum();
  VectorXd err_c = VectorXd::Constant(m_count, plan.col_mass) - entries.colwise().sum().transpose();
  const double leftover = err_r.cwiseMax(0.0).sum();
  if (leftover > 0.0)
    entries.noalias() += err_r.cwiseMax(0.0) * err_c.cwiseMax(0.0).transpose() / leftover;

  plan.entries = entries;
  return plan;
}

}  // namespace ensda

#endif  // ENSDA_TRANSPORT_HPP
