/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_FILTER_DIAGNOSTICS_HPP
#define ENSDA_FILTER_DIAGNOSTICS_HPP

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ensda/ensemble.hpp"

namespace ensda {

struct TemperingStep {
  int iteration = 0;
  double phi = 0.0;
  double ess = 0.0;
  double acceptance_rate = 0.0;
};

struct RegularizationStep {
  int iteration = 0;
  double mu = std::numeric_limits<double>::quiet_NaN();  // NaN on the stopping sweep
  double innovation_norm = 0.0;   // whitened mean innovation
  double stop_threshold = 0.0;    // whitened noise norm / Omega
};

struct FilterDiagnostics {
  int iterations = 0;
  long long model_evaluations = 0;
  long long failed_evaluations = 0;
  bool stalled = false;
  std::vector<TemperingStep> tempering;
  std::vector<RegularizationStep> regularization;
  std::vector<double> mu_trace;  // accepted regularization parameters
  std::vector<std::string> warnings;
  double final_innovation = std::numeric_limits<double>::quiet_NaN();
};

struct AssimilationResult {
  Ensemble ensemble;
  FilterDiagnostics diagnostics;
};

/// Raised when an assimilation loop hits its iteration cap; carries the
/// partial diagnostics gathered so far.
class FilterAbort : public std::runtime_error {
 public:
  FilterAbort(const std::string& what, FilterDiagnostics diag)
      : std::runtime_error(what), diagnostics(std::move(diag)) {}
  FilterDiagnostics diagnostics;
};

}  // namespace ensda

#endif  // ENSDA_FILTER_DIAGNOSTICS_HPP
