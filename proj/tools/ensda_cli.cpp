/*
 * (C) Copyright 2026 ensda authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

// Experiment driver: `run` executes a config over its seeds, `oracle` runs
// the posterior reference for a config, `aggregate` and `report` summarize a
// directory of finished runs. Exit code 0 only when every seed completed.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "ensda/harness/aggregate.hpp"
#include "ensda/harness/config.hpp"
#include "ensda/harness/experiment.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string output;
  std::vector<std::uint64_t> seeds;
  int threads = 0;
};

ensda::ExperimentConfig load_with_overrides(const CommonOptions& opt) {
  ensda::ExperimentConfig cfg = ensda::load_config(opt.config_path);
  if (!opt.seeds.empty()) cfg.seeds = opt.seeds;
  if (opt.threads > 0) cfg.threads = opt.threads;
  if (!opt.output.empty()) cfg.output = opt.output;
  cfg.validate();
  return cfg;
}

int report_outcome(const ensda::ExperimentResult& result) {
  for (const auto& r : result.records) {
    std::printf("%s seed %llu: %s, T=%d, evaluations=%lld", r.method.c_str(),
                static_cast<unsigned long long>(r.seed), r.completed ? "completed" : "ABORTED",
                r.iterations, r.model_evaluations);
    if (std::isfinite(r.rmse_log_k)) std::printf(", rmse_log_k=%.6g", r.rmse_log_k);
    if (std::isfinite(r.rmse_pressure)) std::printf(", rmse_pressure=%.6g", r.rmse_pressure);
    std::printf("\n");
    for (const auto& w : r.warnings) std::printf("  warning: %s\n", w.c_str());
  }
  return result.all_completed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ensemble data assimilation benchmark driver"};
  app.require_subcommand(1);

  CommonOptions run_opt, oracle_opt;
  std::string aggregate_dir, report_dir;

  CLI::App* run = app.add_subcommand("run", "run an experiment config over its seeds");
  run->add_option("config", run_opt.config_path, "experiment config file")->required();
  run->add_option("--seed", run_opt.seeds, "override the seed list");
  run->add_option("--threads", run_opt.threads, "override the thread count");
  run->add_option("--output", run_opt.output, "override the output directory");

  CLI::App* oracle = app.add_subcommand("oracle", "run the posterior reference for a config");
  oracle->add_option("config", oracle_opt.config_path, "experiment config file")->required();
  oracle->add_option("--seed", oracle_opt.seeds, "override the seed list");
  oracle->add_option("--threads", oracle_opt.threads, "override the thread count");
  oracle->add_option("--output", oracle_opt.output, "override the output directory");

  CLI::App* aggregate =
      app.add_subcommand("aggregate", "summarize finished runs into rmse.csv");
  aggregate->add_option("dir", aggregate_dir, "directory tree of run records")->required();

  CLI::App* report = app.add_subcommand("report", "emit rmse.csv and table1.csv for a directory");
  report->add_option("dir", report_dir, "directory tree of run records")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = load_with_overrides(run_opt);
      return report_outcome(ensda::run_experiment(cfg, cfg.output));
    }
    if (oracle->parsed()) {
      auto cfg = load_with_overrides(oracle_opt);
      cfg.method = "mcmc";
      return report_outcome(ensda::run_experiment(cfg, cfg.output));
    }
    if (aggregate->parsed() || report->parsed()) {
      const std::string dir = aggregate->parsed() ? aggregate_dir : report_dir;
      const auto records = ensda::scan_records(dir);
      if (records.empty()) {
        std::fprintf(stderr, "no run records found under %s\n", dir.c_str());
        return 1;
      }
      const auto rows = ensda::aggregate_records(records);
      ensda::write_rmse_summary_csv(dir + "/rmse.csv", rows);
      std::printf("wrote %s/rmse.csv (%zu groups from %zu records)\n", dir.c_str(), rows.size(),
                  records.size());
      if (report->parsed()) {
        ensda::write_table1_csv(dir + "/table1.csv", rows);
        std::printf("wrote %s/table1.csv\n", dir.c_str());
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
