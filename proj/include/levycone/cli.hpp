#pragma once
// Config-driven command line:
//
//   levycone sample  --config cfg.json [--out DIR] [--seed S]
//   levycone evolve  --config cfg.json [--out DIR] [--seed S]
//   levycone verify  --config cfg.json [--out DIR] [--seed S] [--workers N] [checks...]
//   levycone report  [--out DIR]
//
// Exit codes are a stable contract: 0 success / all checks pass, 1 a check
// failed (or a computation aborted), 2 usage or configuration error.  Every
// output file names the configuration hash and the seed that produced it.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "levycone/cone.hpp"
#include "levycone/config.hpp"
#include "levycone/dynamics.hpp"
#include "levycone/report.hpp"
#include "levycone/verify.hpp"

namespace levycone {

namespace detail {

inline std::string measure_header(int dim) {
  std::string h = "mass";
  for (int i = 1; i <= dim; ++i) h += ",x" + std::to_string(i);
  return h;
}

inline void write_atom_row(std::ofstream& f, const Atom& a, int dim,
                           const double* time = nullptr) {
  std::string row;
  if (time) row += csv_num(*time) + ",";
  row += csv_num(a.mass);
  for (int i = 0; i < dim; ++i)
    row += "," + csv_num(a.pos[static_cast<std::size_t>(i)]);
  f << row << "\n";
}

inline std::string meta_line(const char* what, const ExperimentConfig& cfg) {
  return std::string("# levycone ") + what + " config_hash=" + cfg.hash +
         " seed=" + std::to_string(cfg.seed) + "\n";
}

}  // namespace detail

inline int cmd_sample(const ExperimentConfig& cfg, const std::string& out) {
  std::filesystem::create_directories(out);
  const ConeSampler sampler(cfg.space, cfg.model, cfg.epsilon);
  for (std::size_t rep = 0; rep < cfg.sample_count; ++rep) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%03zu.csv", rep);
    const std::string path = out + "/" + name;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("sample: cannot write '" + path + "'");
    f << detail::meta_line("sample", cfg);
    f << detail::measure_header(cfg.space.dim) << "\n";
    const DiscreteMeasure eta = sampler.sample(cfg.seed, rep);
    for (const Atom& a : eta.atoms) detail::write_atom_row(f, a, cfg.space.dim);
  }
  std::cout << "sample: wrote " << cfg.sample_count << " measure(s) to " << out
            << "\n";
  return 0;
}

inline int cmd_evolve(const ExperimentConfig& cfg, const std::string& out) {
  if (!cfg.has_dynamics)
    throw ConfigError("config: evolve requires a dynamics section");
  std::filesystem::create_directories(out);
  const ConeSampler sampler(cfg.space, cfg.model, cfg.epsilon);
  const DiscreteMeasure eta0 = sampler.sample(cfg.seed, 0);
  StepDiagnostics diag;
  const std::vector<DiscreteMeasure> snaps =
      evolve(cfg.space, cfg.model, eta0, cfg.times, cfg.dt, cfg.seed, 0, &diag);

  {
    std::ofstream f(out + "/trajectory.csv");
    if (!f) throw std::runtime_error("evolve: cannot write to '" + out + "'");
    f << detail::meta_line("evolve", cfg);
    f << "t," << detail::measure_header(cfg.space.dim) << "\n";
    for (std::size_t k = 0; k < snaps.size(); ++k)
      for (const Atom& a : snaps[k].atoms)
        detail::write_atom_row(f, a, cfg.space.dim, &cfg.times[k]);
  }

  if (!cfg.observables.empty()) {
    std::ofstream f(out + "/observables.csv");
    f << detail::meta_line("evolve", cfg);
    f << "t,name,value\n";
    for (std::size_t k = 0; k < snaps.size(); ++k)
      for (const ObservableSpec& o : cfg.observables)
        f << detail::csv_num(cfg.times[k]) << "," << o.name << ","
          << detail::csv_num(marked_pairing(cfg.space, snaps[k], o.phi)) << "\n";
  }

  {
    nlohmann::json j;
    j["config_hash"] = cfg.hash;
    j["seed"] = cfg.seed;
    j["model"] = cfg.model.name();
    j["dt"] = cfg.dt;
    j["times"] = cfg.times;
    j["atoms"] = eta0.size();
    j["mass_steps"] = diag.mass_steps;
    j["halvings"] = diag.halvings;
    nlohmann::json masses = nlohmann::json::array();
    for (const DiscreteMeasure& s : snaps) masses.push_back(s.total_mass());
    j["total_mass"] = masses;
    std::ofstream f(out + "/diagnostics.json");
    f << j.dump(2) << "\n";
  }
  std::cout << "evolve: " << snaps.size() << " snapshot(s), " << eta0.size()
            << " atoms, written to " << out << "\n";
  return 0;
}

inline int cmd_verify(const ExperimentConfig& cfg, const std::vector<std::string>& names,
                      const std::string& out, int workers) {
  if (cfg.space.dim != 2)
    throw ConfigError(
        "config: the verification checks are calibrated for space.dim == 2");

  // Resolve and validate the full check list before any computation.
  std::vector<CheckSpec> specs;
  if (!names.empty()) {
    for (const std::string& n : names) {
      bool known = false;
      for (const std::string& r : check_names())
        if (r == n) known = true;
      if (!known) throw ConfigError("verify: unknown check '" + n + "'");
      CheckSpec s;
      s.name = n;
      s.replicas = cfg.default_replicas;
      for (const CheckSpec& c : cfg.checks)
        if (c.name == n) s = c;
      specs.push_back(s);
    }
  } else if (!cfg.checks.empty()) {
    specs = cfg.checks;
  } else {
    for (const std::string& n : check_names()) {
      CheckSpec s;
      s.name = n;
      s.replicas = cfg.default_replicas;
      specs.push_back(s);
    }
  }

  std::vector<CheckResult> results;
  results.reserve(specs.size());
  for (const CheckSpec& s : specs) {
    VerifyConfig vc;
    vc.space = cfg.space;
    vc.model = cfg.model;
    vc.epsilon = cfg.epsilon;
    vc.replicas = s.replicas;
    vc.seed = cfg.seed;
    vc.dt = cfg.dt;
    vc.tolerance = s.tolerance;
    vc.workers = workers;
    results.push_back(run_check(s.name, vc, cfg.fault));
  }

  const ReportMeta meta{cfg.hash, cfg.seed, cfg.model.name(), cfg.epsilon};
  write_report(out, meta, results);
  render_table(std::cout, results);
  bool all = true;
  for (const CheckResult& r : results) all = all && r.pass;
  std::cout << (all ? "verify: all checks passed" : "verify: FAILURES detected")
            << " (report in " << out << ")\n";
  return all ? 0 : 1;
}

inline int cmd_report(const std::string& out) {
  const LoadedReport rep = load_report(out + "/verify_report.json");
  for (const CheckResult& r : rep.checks) {
    if (r.pass != derived_verdict(r))
      throw ConfigError("report: stored verdict for '" + r.name +
                        "' does not follow from its recorded numbers");
  }
  std::cout << "report: config_hash=" << rep.meta.config_hash
            << " seed=" << rep.meta.seed << " model=" << rep.meta.model << "\n";
  render_table(std::cout, rep.checks);
  {
    std::ofstream f(out + "/verify_summary.csv");
    f << summary_csv(rep.meta, rep.checks);
  }
  bool all = true;
  for (const CheckResult& r : rep.checks) all = all && r.pass;
  return all ? 0 : 1;
}

inline int run_cli(int argc, char** argv) {
  CLI::App app{
      "levycone: simulation and verification toolkit for measure-valued "
      "Levy processes on the cone of discrete measures"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed_override = 0;
  int workers = 0;
  std::vector<std::string> check_args;
  std::vector<CLI::Option*> seed_opts;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment configuration (JSON)")
        ->required();
    sub->add_option("--out", out_dir, "output directory (default: current)");
    seed_opts.push_back(
        sub->add_option("--seed", seed_override, "override the configured seed"));
    sub->add_option("--workers", workers,
                    "worker threads (0 = machine parallelism)");
    return sub;
  };

  CLI::App* sample =
      add_common(app.add_subcommand("sample", "draw measures from the sampler"));
  CLI::App* evolve_cmd =
      add_common(app.add_subcommand("evolve", "run the particle dynamics"));
  CLI::App* verify =
      add_common(app.add_subcommand("verify", "run the identity checks"));
  verify->add_option("checks", check_args, "subset of checks to run (default: all)");
  CLI::App* report = app.add_subcommand("report", "re-render a verification report");
  report->add_option("--out", out_dir, "directory holding verify_report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (report->parsed()) return cmd_report(out_dir);
    ExperimentConfig cfg = load_config(config_path);
    for (const CLI::Option* o : seed_opts) {
      if (o->count() > 0) {
        cfg.seed = seed_override;
        cfg.hash = config_hash(cfg);
      }
    }
    if (sample->parsed()) return cmd_sample(cfg, out_dir);
    if (evolve_cmd->parsed()) return cmd_evolve(cfg, out_dir);
    return cmd_verify(cfg, check_args, out_dir, workers);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace levycone
