#pragma once
// Report emission and re-rendering for the verification harness.  A verify
// run produces two artifacts in the output directory:
//
//   verify_report.json   one entry per check with every recorded number,
//                        including all sub-results, so a verdict can be
//                        audited offline;
//   verify_summary.csv   one row per check (check, lhs, rhs, z, verdict).
//
// Both carry the configuration hash and the seed.  Nothing in either file
// depends on wall-clock time or machine identity, so reruns with the same
// seed produce byte-identical artifacts.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "levycone/config.hpp"
#include "levycone/verify.hpp"

namespace levycone {

struct ReportMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string model;
  double epsilon = 0.0;
};

namespace detail {

// Fixed-format float for CSV cells: round-trippable, locale-independent.
inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline nlohmann::json sub_to_json(const SubResult& p) {
  return {{"label", p.label},
          {"lhs", p.lhs},
          {"lhs_stderr", p.lhs_stderr},
          {"rhs", p.rhs},
          {"rhs_stderr", p.rhs_stderr},
          {"residual", p.residual},
          {"residual_stderr", p.residual_stderr},
          {"budget", p.budget},
          {"z", p.z}};
}

inline SubResult sub_from_json(const nlohmann::json& j) {
  SubResult p;
  p.label = j.at("label").get<std::string>();
  p.lhs = j.at("lhs").get<double>();
  p.lhs_stderr = j.at("lhs_stderr").get<double>();
  p.rhs = j.at("rhs").get<double>();
  p.rhs_stderr = j.at("rhs_stderr").get<double>();
  p.residual = j.at("residual").get<double>();
  p.residual_stderr = j.at("residual_stderr").get<double>();
  p.budget = j.at("budget").get<double>();
  p.z = j.at("z").get<double>();
  return p;
}

}  // namespace detail

inline nlohmann::json check_to_json(const CheckResult& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["lhs"] = r.lhs;
  j["lhs_stderr"] = r.lhs_stderr;
  j["rhs"] = r.rhs;
  j["rhs_stderr"] = r.rhs_stderr;
  j["residual"] = r.residual;
  j["residual_stderr"] = r.residual_stderr;
  j["z"] = r.z;
  j["budget"] = r.budget;
  j["tolerance"] = r.tolerance;
  j["replicas"] = r.replicas;
  j["seed"] = r.seed;
  j["pass"] = r.pass;
  j["epsilon"] = r.eps;
  j["residual_at_eps"] = r.residual_at_eps;
  j["residual_at_half_eps"] = r.residual_at_half_eps;
  j["note"] = r.note;
  j["parts"] = nlohmann::json::array();
  for (const SubResult& p : r.parts) j["parts"].push_back(detail::sub_to_json(p));
  return j;
}

inline CheckResult check_from_json(const nlohmann::json& j) {
  CheckResult r;
  r.name = j.at("name").get<std::string>();
  r.lhs = j.at("lhs").get<double>();
  r.lhs_stderr = j.at("lhs_stderr").get<double>();
  r.rhs = j.at("rhs").get<double>();
  r.rhs_stderr = j.at("rhs_stderr").get<double>();
  r.residual = j.at("residual").get<double>();
  r.residual_stderr = j.at("residual_stderr").get<double>();
  r.z = j.at("z").get<double>();
  r.budget = j.at("budget").get<double>();
  r.tolerance = j.at("tolerance").get<double>();
  r.replicas = j.at("replicas").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.pass = j.at("pass").get<bool>();
  r.eps = j.at("epsilon").get<double>();
  r.residual_at_eps = j.at("residual_at_eps").get<double>();
  r.residual_at_half_eps = j.at("residual_at_half_eps").get<double>();
  r.note = j.at("note").get<std::string>();
  for (const auto& p : j.at("parts")) r.parts.push_back(detail::sub_from_json(p));
  return r;
}

// The verdict rule, recomputed from recorded numbers alone.  Used by tests
// and by `report` to confirm a stored verdict is auditable.
inline bool derived_verdict(const CheckResult& r) {
  if (r.parts.empty()) return false;
  for (const SubResult& p : r.parts) {
    const double scale = std::max({1.0, std::abs(p.lhs), std::abs(p.rhs)});
    if (std::abs(p.z) > kZGate) return false;
    if (std::abs(p.residual) / scale > r.tolerance) return false;
  }
  return true;
}

inline nlohmann::json report_json(const ReportMeta& meta,
                                  const std::vector<CheckResult>& results) {
  nlohmann::json j;
  j["config_hash"] = meta.config_hash;
  j["seed"] = meta.seed;
  j["model"] = meta.model;
  j["epsilon"] = meta.epsilon;
  j["checks"] = nlohmann::json::array();
  for (const CheckResult& r : results) j["checks"].push_back(check_to_json(r));
  return j;
}

inline std::string summary_csv(const ReportMeta& meta,
                               const std::vector<CheckResult>& results) {
  std::string out = "# levycone verify config_hash=" + meta.config_hash +
                    " seed=" + std::to_string(meta.seed) + "\n";
  out += "check,lhs,rhs,z,verdict\n";
  for (const CheckResult& r : results) {
    out += r.name + "," + detail::csv_num(r.lhs) + "," + detail::csv_num(r.rhs) + "," +
           detail::csv_num(r.z) + "," + (r.pass ? "pass" : "fail") + "\n";
  }
  return out;
}

inline void write_report(const std::string& dir, const ReportMeta& meta,
                         const std::vector<CheckResult>& results) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/verify_report.json");
    if (!f) throw std::runtime_error("report: cannot write to '" + dir + "'");
    f << report_json(meta, results).dump(2) << "\n";
  }
  {
    std::ofstream f(dir + "/verify_summary.csv");
    f << summary_csv(meta, results);
  }
}

struct LoadedReport {
  ReportMeta meta;
  std::vector<CheckResult> checks;
};

inline LoadedReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("report: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("report: '" + path + "' is not valid JSON: " + e.what());
  }
  LoadedReport rep;
  try {
    rep.meta.config_hash = j.at("config_hash").get<std::string>();
    rep.meta.seed = j.at("seed").get<std::uint64_t>();
    rep.meta.model = j.at("model").get<std::string>();
    rep.meta.epsilon = j.at("epsilon").get<double>();
    for (const auto& c : j.at("checks")) rep.checks.push_back(check_from_json(c));
  } catch (const std::exception& e) {
    throw ConfigError("report: '" + path + "' is missing fields: " + e.what());
  }
  return rep;
}

inline void render_table(std::ostream& os, const std::vector<CheckResult>& results) {
  char line[160];
  std::snprintf(line, sizeof(line), "%-26s %12s %12s %9s %8s  %s\n", "check", "lhs",
                "rhs", "z", "verdict", "worst part");
  os << line;
  for (const CheckResult& r : results) {
    std::string worst;
    for (const SubResult& p : r.parts)
      if (p.z == r.z && worst.empty()) worst = p.label;
    std::snprintf(line, sizeof(line), "%-26s %12.5g %12.5g %9.3f %8s  %s\n",
                  r.name.c_str(), r.lhs, r.rhs, r.z, r.pass ? "pass" : "FAIL",
                  worst.c_str());
    os << line;
    if (!r.note.empty() && !r.pass) os << "    note: " << r.note << "\n";
  }
}

}  // namespace levycone
