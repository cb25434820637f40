/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#ifndef ENSDA_HARNESS_AGGREGATE_HPP
#define ENSDA_HARNESS_AGGREGATE_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensda/harness/experiment.hpp"
#include "ensda/stats.hpp"

namespace ensda {

struct AggregateRow {
  std::string problem, method;
  int ensemble_size = 0;
  int n_seeds = 0;
  double rmse_log_k_median = std::numeric_limits<double>::quiet_NaN();
  double rmse_log_k_p25 = std::numeric_limits<double>::quiet_NaN();
  double rmse_log_k_p75 = std::numeric_limits<double>::quiet_NaN();
  double rmse_log_k_p2 = std::numeric_limits<double>::quiet_NaN();
  double rmse_log_k_p98 = std::numeric_limits<double>::quiet_NaN();
  double rmse_pressure_median = std::numeric_limits<double>::quiet_NaN();
  double rmse_pressure_p25 = std::numeric_limits<double>::quiet_NaN();
  double rmse_pressure_p75 = std::numeric_limits<double>::quiet_NaN();
  double rmse_pressure_p2 = std::numeric_limits<double>::quiet_NaN();
  double rmse_pressure_p98 = std::numeric_limits<double>::quiet_NaN();
  double mean_iterations = std::numeric_limits<double>::quiet_NaN();
  double mean_model_evaluations = std::numeric_limits<double>::quiet_NaN();
};

/// Walk an output tree for record.json files.
inline std::vector<RunRecord> scan_records(const std::string& root) {
  std::vector<RunRecord> records;
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().filename() == "record.json")
      paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& path : paths) {
    std::ifstream is(path);
    nlohmann::json j;
    is >> j;
    RunRecord r;
    r.config_name = j.value("config_name", "");
    r.config_hash = j.value("config_hash", "");
    r.problem = j.value("problem", "");
    r.method = j.value("method", "");
    r.ensemble_size = j.value("ensemble_size", 0);
    r.seed = j.value("seed", 0ULL);
    r.iterations = j.value("iterations", 0);
    r.model_evaluations = j.value("model_evaluations", 0LL);
    r.failed_evaluations = j.value("failed_evaluations", 0LL);
    r.completed = j.value("completed", false);
    r.stalled = j.value("stalled", false);
    r.rmse_log_k = j.value("rmse_log_k", std::numeric_limits<double>::quiet_NaN());
    r.rmse_pressure = j.value("rmse_pressure", std::numeric_limits<double>::quiet_NaN());
    r.wall_ms = j.value("wall_ms", 0.0);
    records.push_back(std::move(r));
  }
  return records;
}

/// Per (problem, method, M) summary: median and the 25/75 and 2/98
/// percentiles of the error metrics, mean iteration and evaluation counts.
inline std::vector<AggregateRow> aggregate_records(const std::vector<RunRecord>& records) {
  std::map<std::tuple<std::string, std::string, int>, std::vector<const RunRecord*>> groups;
  for (const auto& r : records)
    groups[{r.problem, r.method, r.ensemble_size}].push_back(&r);

  std::vector<AggregateRow> rows;
  for (const auto& [key, group] : groups) {
    AggregateRow row;
    row.problem = std::get<0>(key);
    row.method = std::get<1>(key);
    row.ensemble_size = std::get<2>(key);
    row.n_seeds = static_cast<int>(group.size());

    std::vector<double> log_k, pressure, iterations, evaluations;
    for (const RunRecord* r : group) {
      if (std::isfinite(r->rmse_log_k)) log_k.push_back(r->rmse_log_k);
      if (std::isfinite(r->rmse_pressure)) pressure.push_back(r->rmse_pressure);
      iterations.push_back(static_cast<double>(r->iterations));
      evaluations.push_back(static_cast<double>(r->model_evaluations));
    }
    if (!log_k.empty()) {
      row.rmse_log_k_median = percentile(log_k, 50.0);
      row.rmse_log_k_p25 = percentile(log_k, 25.0);
      row.rmse_log_k_p75 = percentile(log_k, 75.0);
      row.rmse_log_k_p2 = percentile(log_k, 2.0);
      row.rmse_log_k_p98 = percentile(log_k, 98.0);
    }
    if (!pressure.empty()) {
      row.rmse_pressure_median = percentile(pressure, 50.0);
      row.rmse_pressure_p25 = percentile(pressure, 25.0);
      row.rmse_pressure_p75 = percentile(pressure, 75.0);
      row.rmse_pressure_p2 = percentile(pressure, 2.0);
      row.rmse_pressure_p98 = percentile(pressure, 98.0);
    }
    double iter_sum = 0.0, eval_sum = 0.0;
    for (double v : iterations) iter_sum += v;
    for (double v : evaluations) eval_sum += v;
    row.mean_iterations = iter_sum / iterations.size();
    row.mean_model_evaluations = eval_sum / evaluations.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_rmse_summary_csv(const std::string& path,
                                   const std::vector<AggregateRow>& rows) {
  std::ofstream os(path);
  os << "# percentile convention: linear interpolation between order statistics,"
        " rank = p/100 * (n - 1)\n";
  os << "problem,method,ensemble_size,n_seeds"
        ",rmse_log_k_median,rmse_log_k_p25,rmse_log_k_p75,rmse_log_k_p2,rmse_log_k_p98"
        ",rmse_pressure_median,rmse_pressure_p25,rmse_pressure_p75,rmse_pressure_p2,"
        "rmse_pressure_p98,mean_iterations,mean_model_evaluations\n";
  for (const auto& r : rows) {
    os << r.problem << ',' << r.method << ',' << r.ensemble_size << ',' << r.n_seeds;
    for (double v : {r.rmse_log_k_median, r.rmse_log_k_p25, r.rmse_log_k_p75, r.rmse_log_k_p2,
                     r.rmse_log_k_p98, r.rmse_pressure_median, r.rmse_pressure_p25,
                     r.rmse_pressure_p75, r.rmse_pressure_p2, r.rmse_pressure_p98,
                     r.mean_iterations, r.mean_model_evaluations}) {
      os << ',';
      detail::format_double(os, v);
    }
    os << "\n";
  }
}

/// Iteration-count table: one row per ensemble size, one column per method.
inline void write_table1_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  const std::vector<std::string> methods = {"tetpf", "tletpf", "renkf", "rlenkf"};
  std::map<int, std::map<std::string, double>> table;
  for (const auto& r : rows)
    if (std::find(methods.begin(), methods.end(), r.method) != methods.end())
      table[r.ensemble_size][r.method] = r.mean_iterations;

  std::ofstream os(path);
  os << "# mean iteration counts per method and ensemble size\n";
  os << "M,tetpf,tletpf,renkf,rlenkf\n";
  for (const auto& [m_count, by_method] : table) {
    os << m_count;
    for (const auto& method : methods) {
      os << ',';
      const auto it = by_method.find(method);
      if (it != by_method.end())
        detail::format_double(os, it->second);
      else
        os << "--";
    }
    os << "\n";
  }
}

}  // namespace ensda

#endif  // ENSDA_HARNESS_AGGREGATE_HPP
