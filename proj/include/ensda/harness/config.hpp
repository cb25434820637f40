/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_HARNESS_CONFIG_HPP
#define ENSDA_HARNESS_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ensda {

/// Flat key = value experiment description; one experiment per file.
/// `#` starts a comment, unknown keys are rejected.
struct ExperimentConfig {
  std::string name = "experiment";
  std::string problem = "toy";   // toy | darcy
  std::string method = "tetpf";  // tetpf | tletpf | renkf | rlenkf | mcmc
  int ensemble_size = 100;
  std::vector<std::uint64_t> seeds = {1};

  // tempering / mutation
  double m_thresh_divisor = 2.0;  // ESS floor = M / divisor
  int tau_max = 20;
  double beta = 0.02;
  int max_iterations = 1000;

  // regularization
  double omega = 0.7;
  double mu0 = 1.0;

  // localization
  double r_loc = 1.0;

  // grids and random field
  int grid_coarse = 35;
  int grid_fine = 70;
  int m_kl = 100;
  int m_kl_truth = 100;
  double correlation_length = 0.5;

  // observations
  int wells_per_side = 7;
  double obs_sigma = 0.01;
  std::string obs_mode = "normalized";  // literal | normalized
  double noise_level = 0.01;
  std::uint64_t data_seed = 424242;

  // transport backend
  std::string ot_backend = "exact";  // exact | entropic
  double ot_epsilon = 1e-2;
  int ot_max_iter = 20000;

  // reference chains
  int mcmc_chains = 4;
  long mcmc_length = 20000;
  long mcmc_burn_in = 5000;
  long mcmc_thinning = 10;
  double mcmc_beta = 0.045;
  int oracle_resolution = 1200;

  std::string reference_dir;  // optional: posterior reference for RMSE metrics
  int threads = 1;
  std::string output = "out";

  void validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
    if (problem != "toy" && problem != "darcy") fail("problem must be toy or darcy");
    if (method != "tetpf" && method != "tletpf" && method != "renkf" && method != "rlenkf" &&
        method != "mcmc")
      fail("unknown method " + method);
    if (problem == "toy" && (method == "tletpf" || method == "rlenkf"))
      fail("the toy problem is not grid-based; localized methods do not apply");
    if (ensemble_size < 2) fail("ensemble_size must be >= 2");
    if (seeds.empty()) fail("at least one seed");
    if (!(m_thresh_divisor > 1.0) || m_thresh_divisor >= ensemble_size)
      fail("m_thresh_divisor must put M/divisor in (1, M)");
    if (tau_max < 1) fail("tau_max >= 1");
    if (!(beta > 0.0 && beta < 1.0)) fail("beta in (0, 1)");
    if (!(omega > 0.0 && omega < 1.0)) fail("omega in (0, 1)");
    if (!(mu0 > 0.0)) fail("mu0 > 0");
    if (!(r_loc > 0.0)) fail("r_loc > 0");
    if (grid_coarse < 2 || grid_fine < grid_coarse) fail("grids require fine >= coarse >= 2");
    if (m_kl < 1 || m_kl > grid_coarse * grid_coarse) fail("m_kl in [1, N_c^2]");
    if (m_kl_truth < 1 || m_kl_truth > grid_fine * grid_fine) fail("m_kl_truth in [1, N_f^2]");
    if (!(correlation_length > 0.0)) fail("correlation_length > 0");
    if (wells_per_side < 1) fail("wells_per_side >= 1");
    if (!(obs_sigma > 0.0)) fail("obs_sigma > 0");
    if (obs_mode != "literal" && obs_mode != "normalized") fail("obs_mode literal|normalized");
    if (!(noise_level > 0.0)) fail("noise_level > 0");
    if (ot_backend != "exact" && ot_backend != "entropic") fail("ot_backend exact|entropic");
    if (!(ot_epsilon > 0.0)) fail("ot_epsilon > 0");
    if (mcmc_chains < 1 || mcmc_length <= mcmc_burn_in) fail("chain length must exceed burn-in");
    if (mcmc_thinning < 1) fail("mcmc_thinning >= 1");
    if (!(mcmc_beta > 0.0 && mcmc_beta < 1.0)) fail("mcmc_beta in (0, 1)");
    if (oracle_resolution < 100) fail("oracle_resolution >= 100");
    if (threads < 1) fail("threads >= 1");
    if (max_iterations < 1) fail("max_iterations >= 1");
  }

  double m_thresh() const { return ensemble_size / m_thresh_divisor; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& value) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  return seeds;
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& is, const std::string& name = "experiment") {
  ExperimentConfig cfg;
  cfg.name = name;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));

    if (key == "problem") cfg.problem = value;
    else if (key == "method") cfg.method = value;
    else if (key == "ensemble_size") cfg.ensemble_size = std::stoi(value);
    else if (key == "seeds") cfg.seeds = detail::parse_seed_list(value);
    else if (key == "m_thresh_divisor") cfg.m_thresh_divisor = std::stod(value);
    else if (key == "tau_max") cfg.tau_max = std::stoi(value);
    else if (key == "beta") cfg.beta = std::stod(value);
    else if (key == "max_iterations") cfg.max_iterations = std::stoi(value);
    else if (key == "omega") cfg.omega = std::stod(value);
    else if (key == "mu0") cfg.mu0 = std::stod(value);
    else if (key == "r_loc") cfg.r_loc = std::stod(value);
    else if (key == "grid_coarse") cfg.grid_coarse = std::stoi(value);
    else if (key == "grid_fine") cfg.grid_fine = std::stoi(value);
    else if (key == "m_kl") cfg.m_kl = std::stoi(value);
    else if (key == "m_kl_truth") cfg.m_kl_truth = std::stoi(value);
    else if (key == "correlation_length") cfg.correlation_length = std::stod(value);
    else if (key == "wells_per_side") cfg.wells_per_side = std::stoi(value);
    else if (key == "obs_sigma") cfg.obs_sigma = std::stod(value);
    else if (key == "obs_mode") cfg.obs_mode = value;
    else if (key == "noise_level") cfg.noise_level = std::stod(value);
    else if (key == "data_seed") cfg.data_seed = std::stoull(value);
    else if (key == "ot_backend") cfg.ot_backend = value;
    else if (key == "ot_epsilon") cfg.ot_epsilon = std::stod(value);
    else if (key == "ot_max_iter") cfg.ot_max_iter = std::stoi(value);
    else if (key == "mcmc_chains") cfg.mcmc_chains = std::stoi(value);
    else if (key == "mcmc_length") cfg.mcmc_length = std::stol(value);
    else if (key == "mcmc_burn_in") cfg.mcmc_burn_in = std::stol(value);
    else if (key == "mcmc_thinning") cfg.mcmc_thinning = std::stol(value);
    else if (key == "mcmc_beta") cfg.mcmc_beta = std::stod(value);
    else if (key == "oracle_resolution") cfg.oracle_resolution = std::stoi(value);
    else if (key == "reference_dir") cfg.reference_dir = value;
    else if (key == "threads") cfg.threads = std::stoi(value);
    else if (key == "output") cfg.output = value;
    else throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key " + key);
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  std::string name = path;
  const auto slash = name.find_last_of('/');
  if (slash != std::string::npos) name = name.substr(slash + 1);
  const auto dot = name.find_last_of('.');
  if (dot != std::string::npos) name = name.substr(0, dot);
  return parse_config(is, name);
}

/// Canonical serialization used for hashing and the JSON sidecar.
inline std::string canonical_config_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "problem=" << cfg.problem << ";method=" << cfg.method
     << ";ensemble_size=" << cfg.ensemble_size << ";seeds=";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? "," : "") << cfg.seeds[i];
  os << ";m_thresh_divisor=" << cfg.m_thresh_divisor << ";tau_max=" << cfg.tau_max
     << ";beta=" << cfg.beta << ";max_iterations=" << cfg.max_iterations << ";omega=" << cfg.omega
     << ";mu0=" << cfg.mu0 << ";r_loc=" << cfg.r_loc << ";grid_coarse=" << cfg.grid_coarse
     << ";grid_fine=" << cfg.grid_fine << ";m_kl=" << cfg.m_kl
     << ";m_kl_truth=" << cfg.m_kl_truth << ";correlation_length=" << cfg.correlation_length
     << ";wells_per_side=" << cfg.wells_per_side << ";obs_sigma=" << cfg.obs_sigma
     << ";obs_mode=" << cfg.obs_mode << ";noise_level=" << cfg.noise_level
     << ";data_seed=" << cfg.data_seed << ";ot_backend=" << cfg.ot_backend
     << ";ot_epsilon=" << cfg.ot_epsilon << ";ot_max_iter=" << cfg.ot_max_iter
     << ";mcmc_chains=" << cfg.mcmc_chains << ";mcmc_length=" << cfg.mcmc_length
     << ";mcmc_burn_in=" << cfg.mcmc_burn_in << ";mcmc_thinning=" << cfg.mcmc_thinning
     << ";mcmc_beta=" << cfg.mcmc_beta << ";oracle_resolution=" << cfg.oracle_resolution;
  return os.str();
}

/// FNV-1a hash of the canonical text, printed as fixed-width hex.
inline std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = canonical_config_text(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace ensda

#endif  // ENSDA_HARNESS_CONFIG_HPP
