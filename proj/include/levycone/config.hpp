#pragma once
// Experiment configuration: one JSON file drives sampling, dynamics and the
// verification suite.  Parsing is strict -- unknown keys anywhere in the file
// are rejected, every value is range-checked before any computation starts,
// and the effective configuration (defaults filled in, overrides applied) is
// hashed so output files can name the exact experiment that produced them.

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "levycone/functionals.hpp"
#include "levycone/intensity.hpp"
#include "levycone/space.hpp"
#include "levycone/verify.hpp"

namespace levycone {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckSpec {
  std::string name;
  std::size_t replicas = 100000;
  double tolerance = 0.05;
};

struct ObservableSpec {
  std::string name;
  MarkFunction phi;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  IntensityModel model = IntensityModel::gamma();
  double epsilon = 0.0;
  TorusSpace space{2, 1.0};

  bool has_dynamics = false;
  double dt = 1e-3;
  std::vector<double> times;

  std::size_t sample_count = 1;
  std::map<std::string, ScalarField> fields;
  std::vector<ObservableSpec> observables;

  std::vector<CheckSpec> checks;  // empty: run the full registry at defaults
  std::size_t default_replicas = 100000;
  FaultInjection fault;

  std::string hash;  // 16 hex digits of the effective configuration
};

namespace detail {

using json = nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& ctx, const std::string& what) {
  throw ConfigError("config: " + ctx + ": " + what);
}

inline void expect_object(const json& j, const std::string& ctx,
                          std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_fail(ctx, "expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) known = true;
    if (!known) config_fail(ctx, "unknown key '" + item.key() + "'");
  }
}

inline const json& require_key(const json& j, const std::string& ctx, const char* key) {
  if (!j.contains(key)) config_fail(ctx, std::string("missing required key '") + key + "'");
  return j.at(key);
}

inline double as_number(const json& j, const std::string& ctx) {
  if (!j.is_number()) config_fail(ctx, "expected a number");
  return j.get<double>();
}

inline std::uint64_t as_u64(const json& j, const std::string& ctx) {
  if (!j.is_number_unsigned()) config_fail(ctx, "expected an unsigned integer");
  return j.get<std::uint64_t>();
}

inline std::string as_string(const json& j, const std::string& ctx) {
  if (!j.is_string()) config_fail(ctx, "expected a string");
  return j.get<std::string>();
}

inline bool as_bool(const json& j, const std::string& ctx) {
  if (!j.is_boolean()) config_fail(ctx, "expected a boolean");
  return j.get<bool>();
}

inline Point as_point(const json& j, const std::string& ctx, int dim) {
  if (!j.is_array() || j.empty() || j.size() > 3)
    config_fail(ctx, "expected an array of 1..3 numbers");
  if (static_cast<int>(j.size()) > dim)
    config_fail(ctx, "has more entries than the space dimension");
  Point p{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < j.size(); ++i) p[i] = as_number(j[i], ctx);
  return p;
}

inline ScalarField parse_field(const json& j, const std::string& ctx, int dim) {
  expect_object(j, ctx, {"type", "center", "radius", "amplitude", "wave", "phase"});
  const std::string type = as_string(require_key(j, ctx, "type"), ctx + ".type");
  if (type == "zero") {
    expect_object(j, ctx, {"type"});
    return ScalarField::zero();
  }
  if (type == "bump") {
    expect_object(j, ctx, {"type", "center", "radius", "amplitude"});
    const Point c = as_point(require_key(j, ctx, "center"), ctx + ".center", dim);
    const double r = as_number(require_key(j, ctx, "radius"), ctx + ".radius");
    const double a = as_number(require_key(j, ctx, "amplitude"), ctx + ".amplitude");
    if (!(r > 0.0)) config_fail(ctx + ".radius", "must be positive");
    return ScalarField::bump(c, r, a);
  }
  if (type == "fourier") {
    expect_object(j, ctx, {"type", "wave", "amplitude", "phase"});
    const json& w = require_key(j, ctx, "wave");
    if (!w.is_array() || w.empty() || w.size() > 3)
      config_fail(ctx + ".wave", "expected an array of 1..3 integers");
    if (static_cast<int>(w.size()) > dim)
      config_fail(ctx + ".wave", "has more entries than the space dimension");
    std::array<int, 3> wave{0, 0, 0};
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!w[i].is_number_integer()) config_fail(ctx + ".wave", "expected integers");
      wave[i] = w[i].get<int>();
    }
    const double a = as_number(require_key(j, ctx, "amplitude"), ctx + ".amplitude");
    double phase = 0.0;
    if (j.contains("phase")) phase = as_number(j.at("phase"), ctx + ".phase");
    return ScalarField::fourier(wave, a, phase);
  }
  config_fail(ctx + ".type", "unknown field type '" + type + "' (zero|bump|fourier)");
}

inline MassProfile parse_profile(const json& j, const std::string& ctx) {
  expect_object(j, ctx, {"lo", "hi", "ramp"});
  const double lo = as_number(require_key(j, ctx, "lo"), ctx + ".lo");
  const double hi = as_number(require_key(j, ctx, "hi"), ctx + ".hi");
  double ramp = 0.25;
  if (j.contains("ramp")) ramp = as_number(j.at("ramp"), ctx + ".ramp");
  if (!(lo > 0.0) || !(hi > lo)) config_fail(ctx, "needs 0 < lo < hi");
  if (!(ramp > 0.0) || ramp > 0.5) config_fail(ctx + ".ramp", "must lie in (0, 0.5]");
  return MassProfile(lo, hi, ramp);
}

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace detail

// Canonical serialization of the effective configuration (defaults filled
// in).  nlohmann::json keeps object keys sorted, so the dump is a stable
// fingerprint of everything that can influence the numbers.
inline nlohmann::json effective_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["model"]["name"] = cfg.model.kind() == IntensityModel::Kind::kGamma
                           ? "gamma"
                           : "smoothed_log_power";
  if (cfg.model.kind() == IntensityModel::Kind::kSmoothedLogPower)
    j["model"]["alpha"] = cfg.model.alpha();
  j["model"]["epsilon"] = cfg.epsilon;
  j["space"]["dim"] = cfg.space.dim;
  j["space"]["side"] = cfg.space.side;
  if (cfg.has_dynamics) {
    j["dynamics"]["dt"] = cfg.dt;
    j["dynamics"]["times"] = cfg.times;
  }
  j["sample"]["count"] = cfg.sample_count;
  for (const auto& [name, field] : cfg.fields) {
    nlohmann::json f;
    if (field.kind() == ScalarField::Kind::kBump) {
      f["type"] = "bump";
      // The declaration is reproduced from the parsed parameters.
      f["center"] = {field.center()[0], field.center()[1], field.center()[2]};
      f["radius"] = field.radius();
      f["amplitude"] = field.amplitude();
    } else {
      f["type"] = "fourier";
      f["wave"] = {field.wave()[0], field.wave()[1], field.wave()[2]};
      f["amplitude"] = field.amplitude();
      f["phase"] = field.phase();
    }
    j["fields"][name] = f;
  }
  for (const ObservableSpec& o : cfg.observables) {
    nlohmann::json e;
    e["name"] = o.name;
    e["chi"] = {{"lo", o.phi.chi.s_lo()}, {"hi", o.phi.chi.s_hi()}};
    j["observables"].push_back(e);
  }
  for (const CheckSpec& c : cfg.checks) {
    j["checks"].push_back(
        {{"name", c.name}, {"replicas", c.replicas}, {"tolerance", c.tolerance}});
  }
  j["replicas"] = cfg.default_replicas;
  if (cfg.fault.any()) {
    j["fault"] = {{"density_scale", cfg.fault.density_scale},
                  {"flip_drift", cfg.fault.flip_drift},
                  {"l_zero_offset", cfg.fault.l_zero_offset}};
  }
  return j;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  return detail::hex16(detail::fnv1a(effective_json(cfg).dump()));
}

inline ExperimentConfig parse_config(const nlohmann::json& root) {
  using detail::as_bool;
  using detail::as_number;
  using detail::as_string;
  using detail::as_u64;
  using detail::config_fail;
  using detail::expect_object;
  using detail::require_key;

  expect_object(root, "top level",
                {"seed", "model", "space", "dynamics", "sample", "fields",
                 "observables", "checks", "replicas", "fault"});
  ExperimentConfig cfg;
  cfg.seed = as_u64(require_key(root, "top level", "seed"), "seed");

  {
    const nlohmann::json& m = require_key(root, "top level", "model");
    expect_object(m, "model", {"name", "alpha", "epsilon"});
    const std::string name = as_string(require_key(m, "model", "name"), "model.name");
    if (name == "gamma") {
      if (m.contains("alpha"))
        config_fail("model.alpha", "the gamma kernel has no alpha parameter");
      cfg.model = IntensityModel::gamma();
    } else if (name == "smoothed_log_power") {
      const double alpha = as_number(require_key(m, "model", "alpha"), "model.alpha");
      if (!(alpha > 0.0)) config_fail("model.alpha", "must be positive");
      cfg.model = IntensityModel::smoothed_log_power(alpha);
    } else {
      config_fail("model.name",
                  "unknown model '" + name + "' (gamma|smoothed_log_power)");
    }
    cfg.epsilon = as_number(require_key(m, "model", "epsilon"), "model.epsilon");
    if (!(cfg.epsilon > 0.0) || cfg.epsilon >= 1.0)
      config_fail("model.epsilon", "must lie in (0, 1)");
  }

  if (root.contains("space")) {
    const nlohmann::json& s = root.at("space");
    expect_object(s, "space", {"dim", "side"});
    int dim = 2;
    double side = 1.0;
    if (s.contains("dim")) {
      dim = static_cast<int>(as_u64(s.at("dim"), "space.dim"));
      if (dim < 1 || dim > 3) config_fail("space.dim", "must be 1, 2 or 3");
    }
    if (s.contains("side")) {
      side = as_number(s.at("side"), "space.side");
      if (!(side > 0.0)) config_fail("space.side", "must be positive");
    }
    cfg.space = TorusSpace(dim, side);
  }

  if (root.contains("dynamics")) {
    const nlohmann::json& d = root.at("dynamics");
    expect_object(d, "dynamics", {"dt", "times"});
    cfg.has_dynamics = true;
    if (d.contains("dt")) cfg.dt = as_number(d.at("dt"), "dynamics.dt");
    if (!(cfg.dt > 0.0) || cfg.dt > kMaxDynamicsStep)
      config_fail("dynamics.dt", "must lie in (0, 1e-2]");
    const nlohmann::json& t = require_key(d, "dynamics", "times");
    if (!t.is_array() || t.empty())
      config_fail("dynamics.times", "expected a non-empty array");
    double prev = 0.0;
    for (const auto& e : t) {
      const double v = as_number(e, "dynamics.times");
      if (v < 0.0) config_fail("dynamics.times", "must be non-negative");
      if (v < prev) config_fail("dynamics.times", "must be non-decreasing");
      cfg.times.push_back(v);
      prev = v;
    }
  }

  if (root.contains("sample")) {
    const nlohmann::json& s = root.at("sample");
    expect_object(s, "sample", {"count"});
    if (s.contains("count")) {
      cfg.sample_count = as_u64(s.at("count"), "sample.count");
      if (cfg.sample_count == 0 || cfg.sample_count > 10000)
        config_fail("sample.count", "must lie in 1..10000");
    }
  }

  if (root.contains("fields")) {
    const nlohmann::json& f = root.at("fields");
    if (!f.is_object()) config_fail("fields", "expected an object of declarations");
    for (const auto& item : f.items())
      cfg.fields.emplace(item.key(), detail::parse_field(item.value(),
                                                         "fields." + item.key(),
                                                         cfg.space.dim));
  }

  if (root.contains("observables")) {
    const nlohmann::json& obs = root.at("observables");
    if (!obs.is_array()) config_fail("observables", "expected an array");
    for (const auto& e : obs) {
      expect_object(e, "observables[]", {"name", "chi", "u"});
      ObservableSpec spec{
          as_string(require_key(e, "observables[]", "name"), "observables[].name"),
          MarkFunction{detail::parse_profile(require_key(e, "observables[]", "chi"),
                                             "observables[].chi"),
                       ScalarField::zero()}};
      const std::string uname =
          as_string(require_key(e, "observables[]", "u"), "observables[].u");
      const auto it = cfg.fields.find(uname);
      if (it == cfg.fields.end())
        config_fail("observables[].u", "references undeclared field '" + uname + "'");
      spec.phi.u = it->second;
      cfg.observables.push_back(std::move(spec));
    }
    if (!cfg.has_dynamics)
      config_fail("observables", "declared without a dynamics section");
  }

  if (root.contains("replicas")) {
    cfg.default_replicas = as_u64(root.at("replicas"), "replicas");
    if (cfg.default_replicas == 0) config_fail("replicas", "must be positive");
  }

  if (root.contains("checks")) {
    const nlohmann::json& checks = root.at("checks");
    if (!checks.is_array()) config_fail("checks", "expected an array");
    for (const auto& e : checks) {
      expect_object(e, "checks[]", {"name", "replicas", "tolerance"});
      CheckSpec spec;
      spec.name = as_string(require_key(e, "checks[]", "name"), "checks[].name");
      bool known = false;
      for (const std::string& n : check_names())
        if (n == spec.name) known = true;
      if (!known) config_fail("checks[].name", "unknown check '" + spec.name + "'");
      spec.replicas = cfg.default_replicas;
      spec.tolerance = 0.05;
      if (e.contains("replicas")) {
        spec.replicas = as_u64(e.at("replicas"), "checks[].replicas");
        if (spec.replicas == 0) config_fail("checks[].replicas", "must be positive");
      }
      if (e.contains("tolerance")) {
        spec.tolerance = as_number(e.at("tolerance"), "checks[].tolerance");
        if (!(spec.tolerance > 0.0)) config_fail("checks[].tolerance", "must be positive");
      }
      cfg.checks.push_back(std::move(spec));
    }
  }

  if (root.contains("fault")) {
    const nlohmann::json& f = root.at("fault");
    expect_object(f, "fault", {"density_scale", "flip_drift", "l_zero_offset"});
    if (f.contains("density_scale")) {
      cfg.fault.density_scale = as_number(f.at("density_scale"), "fault.density_scale");
      if (!(cfg.fault.density_scale > 0.0))
        config_fail("fault.density_scale", "must be positive");
    }
    if (f.contains("flip_drift"))
      cfg.fault.flip_drift = as_bool(f.at("flip_drift"), "fault.flip_drift");
    if (f.contains("l_zero_offset"))
      cfg.fault.l_zero_offset = as_number(f.at("l_zero_offset"), "fault.l_zero_offset");
  }

  cfg.hash = config_hash(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  nlohmann::json root;
  try {
    in >> root;
  } catch (const std::exception& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(root);
}

}  // namespace levycone
