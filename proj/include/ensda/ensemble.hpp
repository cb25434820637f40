/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_ENSEMBLE_HPP
#define ENSDA_ENSEMBLE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ensda/rng.hpp"

namespace ensda {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Joint parameter / model-error ensemble. Members are the M columns of an
/// (n + m) x M matrix; the first n rows hold the parameter block u, the last
/// m rows the model-error block q.
class Ensemble {
 public:
  Ensemble(MatrixXd members, int param_dim, int error_dim)
      : members_(std::move(members)), n_(param_dim), m_(error_dim) {
    if (n_ < 0 || m_ < 0 || n_ + m_ <= 0)
      throw std::invalid_argument("Ensemble: invalid block dimensions");
    if (members_.rows() != n_ + m_)
      throw std::invalid_argument("Ensemble: member length must equal n + m");
    if (members_.cols() < 2) throw std::invalid_argument("Ensemble: needs at least two members");
  }

  int param_dim() const { return n_; }
  int error_dim() const { return m_; }
  int size() const { return static_cast<int>(members_.cols()); }

  MatrixXd& members() { return members_; }
  const MatrixXd& members() const { return members_; }

  auto params() { return members_.topRows(n_); }
  auto params() const { return members_.topRows(n_); }
  auto model_error() { return members_.bottomRows(m_); }
  auto model_error() const { return members_.bottomRows(m_); }

  VectorXd member(int i) const { return members_.col(i); }

 private:
  MatrixXd members_;
  int n_;
  int m_;
};

/// Observed data: values y_obs, optional physical locations, and the diagonal
/// of the observation-noise covariance R. `noise_draw` carries the realized
/// noise of a synthetic data set; for externally given data it defaults to
/// the componentwise standard deviations, whose whitened norm is sqrt(kappa),
/// the expected value used by the discrepancy stopping rule.
struct ObservationSet {
  VectorXd values;
  std::vector<Eigen::Vector2d> locations;  // empty when the problem is not grid-based
  VectorXd noise_var;                      // diagonal of R
  VectorXd noise_draw;                     // realized noise; empty -> sqrt(noise_var)

  int dim() const { return static_cast<int>(values.size()); }

  void validate() const {
    if (values.size() < 1) throw std::invalid_argument("ObservationSet: empty");
    if (noise_var.size() != values.size())
      throw std::invalid_argument("ObservationSet: noise_var size mismatch");
    if ((noise_var.array() <= 0.0).any())
      throw std::invalid_argument("ObservationSet: noise variances must be positive");
    if (!locations.empty() && static_cast<int>(locations.size()) != values.size())
      throw std::invalid_argument("ObservationSet: locations size mismatch");
    if (noise_draw.size() != 0 && noise_draw.size() != values.size())
      throw std::invalid_argument("ObservationSet: noise_draw size mismatch");
  }

  /// Realized noise vector used by the discrepancy principle.
  VectorXd realized_noise() const {
    if (noise_draw.size() == values.size()) return noise_draw;
    return noise_var.array().sqrt().matrix();
  }
};

/// Per-component prior: Gaussian(mean, std) or Uniform(a, b).
struct PriorComponent {
  enum class Kind { gaussian, uniform };
  Kind kind = Kind::gaussian;
  double a = 0.0;  // mean  | lower bound
  double b = 1.0;  // std   | upper bound

  static PriorComponent gaussian(double mean, double std) {
    if (!(std > 0.0)) throw std::invalid_argument("PriorComponent: std must be > 0");
    return {Kind::gaussian, mean, std};
  }
  static PriorComponent uniform(double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("PriorComponent: needs a < b");
    return {Kind::uniform, lo, hi};
  }
};

struct PriorSpec {
  std::vector<PriorComponent> components;

  int dim() const { return static_cast<int>(components.size()); }

  double sample(int i, Rng& rng) const {
    const PriorComponent& c = components.at(i);
    if (c.kind == PriorComponent::Kind::gaussian) return c.a + c.b * rng.normal();
    return rng.uniform(c.a, c.b);
  }

  VectorXd sample_vector(Rng& rng) const {
    VectorXd v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = sample(i, rng);
    return v;
  }
};

/// Draw an initial ensemble of M members from per-coordinate priors.
/// Member i uses its own counter stream, so draws are order-independent.
inline Ensemble draw_initial_ensemble(const PriorSpec& prior, int param_dim, int error_dim,
                                      int ensemble_size, std::uint64_t seed) {
  if (prior.dim() != param_dim + error_dim)
    throw std::invalid_argument("draw_initial_ensemble: prior dimension mismatch");
  MatrixXd members(prior.dim(), ensemble_size);
  for (int i = 0; i < ensemble_size; ++i) {
    Rng rng = Rng::stream(seed, 0x1717, static_cast<std::uint64_t>(i));
    members.col(i) = prior.sample_vector(rng);
  }
  return Ensemble(std::move(members), param_dim, error_dim);
}

/// Quadratic data misfits d' (C R^{-1}) d for every member, with d the
/// prediction residual and C an optional diagonal taper (identity if absent).
/// The likelihood is h = exp(-misfit / 2); all weight arithmetic stays in
/// misfit (log) space because the peaked likelihoods underflow doubles.
inline VectorXd compute_misfits(const MatrixXd& predictions, const ObservationSet& obs,
                                const VectorXd* taper = nullptr) {
  obs.validate();
  if (predictions.rows() != obs.values.size())
    throw std::invalid_argument("compute_misfits: prediction/observation dimension mismatch");
  if (!predictions.allFinite())
    throw std::invalid_argument("compute_misfits: predictions must be finite");
  if (taper != nullptr) {
    if (taper->size() != obs.values.size())
      throw std::invalid_argument("compute_misfits: taper dimension mismatch");
    if ((taper->array() < 0.0).any() || (taper->array() > 1.0).any())
      throw std::invalid_argument("compute_misfits: taper entries must lie in [0,1]");
  }
  VectorXd scale = obs.noise_var.cwiseInverse();
  if (taper != nullptr) scale = scale.cwiseProduct(*taper);
  const int m_count = static_cast<int>(predictions.cols());
  VectorXd misfits(m_count);
  for (int i = 0; i < m_count; ++i) {
    const VectorXd d = predictions.col(i) - obs.values;
    misfits[i] = d.cwiseProduct(scale).dot(d);
  }
  return misfits;
}

/// Full-SPD noise covariance path: d' (C R^{-1}) d with a dense R.
/// All experiments in this project use the diagonal overload above.
inline VectorXd compute_misfits(const MatrixXd& predictions, const VectorXd& observed,
                                const MatrixXd& noise_cov, const VectorXd* taper = nullptr) {
  if (predictions.rows() != observed.size() || noise_cov.rows() != observed.size() ||
      noise_cov.cols() != observed.size())
    throw std::invalid_argument("compute_misfits: dimension mismatch");
  Eigen::LLT<MatrixXd> llt(noise_cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("compute_misfits: noise covariance is not SPD");
  const int m_count = static_cast<int>(predictions.cols());
  VectorXd misfits(m_count);
  for (int i = 0; i < m_count; ++i) {
    VectorXd d = predictions.col(i) - observed;
    VectorXd rinv_d = llt.solve(d);
    if (taper != nullptr) rinv_d = rinv_d.cwiseProduct(*taper);
    misfits[i] = d.dot(rinv_d);
  }
  return misfits;
}

/// Per-observation squared residual components d_l^2 / R_ll (kappa x M).
/// A taper row applied on the left reproduces the locally tapered misfit.
inline MatrixXd misfit_components(const MatrixXd& predictions, const ObservationSet& obs) {
  obs.validate();
  if (predictions.rows() != obs.values.size())
    throw std::invalid_argument("misfit_components: dimension mismatch");
  MatrixXd comp = (predictions.colwise() - obs.values).array().square().matrix();
  comp.array().colwise() *= obs.noise_var.cwiseInverse().array();
  return comp;
}

/// Self-normalized importance weights w_i proportional to exp(-dphi * misfit_i / 2),
/// the bridging-likelihood exponent of one tempering increment. Computed by
/// subtracting the minimum misfit before exponentiation.
inline VectorXd tempered_weights(const VectorXd& misfits, double dphi) {
  if (!(dphi > 0.0) || dphi > 1.0)
    throw std::invalid_argument("tempered_weights: dphi must lie in (0, 1]");
  const double lo = misfits.minCoeff();
  if (!std::isfinite(lo)) throw std::runtime_error("tempered_weights: degenerate weights (all misfits infinite)");
  VectorXd w = (-(0.5 * dphi) * (misfits.array() - lo)).exp();
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total))
    throw std::runtime_error("tempered_weights: degenerate weights");
  return w / total;
}

/// Effective ensemble size (sum w)^2 / sum w^2, between 1 and M.
/// Scale invariant, so unnormalized likelihood values are accepted.
inline double effective_sample_size(const VectorXd& w) {
  if (w.size() == 0 || (w.array() < 0.0).any())
    throw std::invalid_argument("effective_sample_size: invalid weights");
  const double s = w.sum();
  const double s2 = w.squaredNorm();
  if (!(s2 > 0.0)) throw std::invalid_argument("effective_sample_size: zero weights");
  return s * s / s2;
}

/// Euclidean norm of the difference between a mean field and a reference
/// field. Deliberately not normalized by the vector length; values on
/// different grid sizes are therefore not directly comparable.
inline double rmse(const VectorXd& field_mean, const VectorXd& reference) {
  if (field_mean.size() != reference.size())
    throw std::invalid_argument("rmse: length mismatch");
  return (field_mean - reference).norm();
}

inline VectorXd ensemble_mean(const Ensemble& ens) { return ens.members().rowwise().mean(); }

/// Per-coordinate sample variance with 1/(M-1) normalization.
inline VectorXd ensemble_variance(const Ensemble& ens) {
  const int m_count = ens.size();
  if (m_count < 2) throw std::invalid_argument("ensemble_variance: needs M >= 2");
  const VectorXd mean = ensemble_mean(ens);
  return (ens.members().colwise() - mean).rowwise().squaredNorm() / (m_count - 1);
}

namespace detail {

inline void format_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace detail

/// CSV serialization: header comment records the block sizes, then one row
/// per coordinate with members as columns.
inline void save_ensemble_csv(std::ostream& os, const Ensemble& ens) {
  os << "# n=" << ens.param_dim() << " m=" << ens.error_dim() << " M=" << ens.size() << "\n";
  for (int r = 0; r < ens.members().rows(); ++r) {
    for (int c = 0; c < ens.size(); ++c) {
      if (c) os << ',';
      detail::format_double(os, ens.members()(r, c));
    }
    os << "\n";
  }
}

inline void save_ensemble_csv(const std::string& path, const Ensemble& ens) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_ensemble_csv: cannot open " + path);
  save_ensemble_csv(os, ens);
}

inline Ensemble load_ensemble_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("load_ensemble_csv: empty input");
  int n = -1, m = -1, m_count = -1;
  if (std::sscanf(line.c_str(), "# n=%d m=%d M=%d", &n, &m, &m_count) != 3)
    throw std::runtime_error("load_ensemble_csv: bad header: " + line);
  MatrixXd members(n + m, m_count);
  for (int r = 0; r < n + m; ++r) {
    if (!std::getline(is, line)) throw std::runtime_error("load_ensemble_csv: truncated input");
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c < m_count; ++c) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("load_ensemble_csv: short row");
      members(r, c) = std::stod(cell);
    }
  }
  return Ensemble(std::move(members), n, m);
}

inline Ensemble load_ensemble_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_ensemble_csv: cannot open " + path);
  return load_ensemble_csv(is);
}

/// Flat binary serialization: magic, block sizes, then column-major doubles.
inline void save_ensemble_binary(const std::string& path, const Ensemble& ens) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_ensemble_binary: cannot open " + path);
  const char magic[4] = {'E', 'N', 'S', 'D'};
  os.write(magic, 4);
  const std::uint32_t dims[3] = {static_cast<std::uint32_t>(ens.param_dim()),
                                 static_cast<std::uint32_t>(ens.error_dim()),
                                 static_cast<std::uint32_t>(ens.size())};
  os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  os.write(reinterpret_cast<const char*>(ens.members().data()),
           static_cast<std::streamsize>(sizeof(double) * ens.members().size()));
}

inline Ensemble load_ensemble_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_ensemble_binary: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || magic[0] != 'E' || magic[1] != 'N' || magic[2] != 'S' || magic[3] != 'D')
    throw std::runtime_error("load_ensemble_binary: bad magic");
  std::uint32_t dims[3];
  is.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!is) throw std::runtime_error("load_ensemble_binary: truncated header");
  MatrixXd members(dims[0] + dims[1], dims[2]);
  is.read(reinterpret_cast<char*>(members.data()),
          static_cast<std::streamsize>(sizeof(double) * members.size()));
  if (!is) throw std::runtime_error("load_ensemble_binary: truncated data");
  return Ensemble(std::move(members), static_cast<int>(dims[0]), static_cast<int>(dims[1]));
}

}  // namespace ensda

#endif  // ENSDA_ENSEMBLE_HPP
