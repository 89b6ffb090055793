// swarm-limits: run experiment configs and verify their checks.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "swarm/config.hpp"
#include "swarm/harness.hpp"

namespace {

int report(const swarm::ExperimentResult& r, const std::vector<swarm::CheckSpec>& checks) {
  std::printf("%s: %zu rows, %.1f s\n", r.id.c_str(), r.table.rows.size(), r.runtime_seconds);
  for (const auto& [col, s] : r.slopes) {
    std::printf("  slope %-20s vs %-8s %+.4f (fit residual %.2e)\n", col.c_str(), r.axis.c_str(),
                s.slope, s.residual);
  }
  for (const auto& [name, v] : r.scalars) std::printf("  %-28s %.6e\n", name.c_str(), v);
  bool all = r.complete;
  for (const auto& o : swarm::evaluate_checks(r, checks)) {
    std::printf("%s %s %s: %s\n", o.passed ? "PASS" : "FAIL", o.spec.kind.c_str(),
                o.spec.column.c_str(), o.detail.c_str());
    all = all && o.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle, Euler-alignment and aggregation limits: scans and checks"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::size_t threads = 1;
  auto* run = app.add_subcommand("run", "run an experiment and write its CSV/gnuplot outputs");
  run->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (default: the config's output_dir)");
  run->add_option("--threads", threads, "scan points evaluated in parallel")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "run an experiment and evaluate its configured checks");
  verify->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  verify->add_option("--threads", threads, "scan points evaluated in parallel")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help exits 0; every usage error maps to the config-error code.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const auto cfg = swarm::load_config(config_path);
    swarm::ExperimentResult result;
    try {
      result = swarm::run_experiment(cfg, threads);
    } catch (const swarm::ScanAborted& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      if (run->parsed()) {
        swarm::write_outputs(e.partial(), out_dir.empty() ? cfg.output_dir : out_dir);
      }
      return 2;
    }
    if (run->parsed()) {
      const std::filesystem::path dir = out_dir.empty() ? cfg.output_dir : out_dir;
      swarm::write_outputs(result, dir);
      std::printf("outputs written to %s\n", dir.string().c_str());
    }
    return report(result, cfg.checks);
  } catch (const swarm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
