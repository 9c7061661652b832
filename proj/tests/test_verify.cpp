#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>
#include <string>

#include "levycone/verify.hpp"

using namespace levycone;

namespace {

VerifyConfig small_config(std::size_t replicas) {
  VerifyConfig cfg;
  cfg.replicas = replicas;
  return cfg;
}

// The documented verdict rule, recomputed from nothing but the recorded
// numbers: every part must satisfy the z-gate and the relative-residual gate.
bool verdict_from_parts(const CheckResult& r) {
  if (r.parts.empty()) return false;
  for (const SubResult& p : r.parts) {
    const double scale = std::max({1.0, std::abs(p.lhs), std::abs(p.rhs)});
    if (std::abs(p.z) > kZGate) return false;
    if (std::abs(p.residual) / scale > r.tolerance) return false;
  }
  return true;
}

const SubResult& part(const CheckResult& r, const std::string& label) {
  for (const SubResult& p : r.parts)
    if (p.label == label) return p;
  FAIL("missing part: " + label);
  return r.parts.front();
}

}  // namespace

TEST_CASE("check results expose a derivable verdict", "[verify]") {
  const CheckResult r = run_check("mecke", small_config(5000));
  CHECK(r.name == "mecke");
  CHECK(r.seed == 20260815);
  CHECK(r.replicas == 5000);
  CHECK(r.eps == 1e-4);
  CHECK(r.pass);
  CHECK(r.pass == verdict_from_parts(r));
  CHECK(r.residual == r.residual_at_eps);
  // z is a pure function of the recorded residual, stderr and budget.
  for (const SubResult& p : r.parts) {
    const double again =
        p.residual / (p.residual_stderr + p.budget / kZGate + kResidualFloor / kZGate);
    CHECK(p.z == again);
  }
  // Monte Carlo quantities carry a positive standard error.
  CHECK(part(r, "indicator").lhs_stderr > 0.0);
  CHECK(part(r, "eta_dependent").residual_stderr > 0.0);
}

TEST_CASE("laplace functional matches its quadrature oracle", "[verify]") {
  SECTION("gamma kernel, including the closed-form exponential moment") {
    const CheckResult r = run_check("laplace", small_config(10000));
    REQUIRE(r.parts.size() == 3);
    CHECK(r.pass);
    CHECK(part(r, "char_real").lhs_stderr > 0.0);
    CHECK(part(r, "gamma_exponential").rhs == 2.0);
    CHECK(part(r, "gamma_exponential").rhs_stderr == 0.0);  // exact oracle
  }
  SECTION("smoothed log-power kernel against the quadrature exponent") {
    VerifyConfig cfg = small_config(8000);
    cfg.model = IntensityModel::smoothed_log_power(1.0);
    const CheckResult r = run_check("laplace", cfg);
    REQUIRE(r.parts.size() == 2);
    CHECK(r.pass);
  }
}

TEST_CASE("mecke add-one-point identity holds", "[verify]") {
  SECTION("gamma kernel with the e^{-1} indicator oracle") {
    const CheckResult r = run_check("mecke", small_config(10000));
    CHECK(r.pass);
    REQUIRE_THAT(part(r, "indicator").rhs,
                 Catch::Matchers::WithinAbs(std::exp(-1.0), 1e-10));
    CHECK(part(r, "zero_G").residual == 0.0);
  }
  SECTION("smoothed log-power kernel") {
    VerifyConfig cfg = small_config(8000);
    cfg.model = IntensityModel::smoothed_log_power(1.0);
    const CheckResult r = run_check("mecke", cfg);
    CHECK(r.pass);
  }
}

TEST_CASE("mark-action density is quasi-invariant", "[verify]") {
  const CheckResult r = run_check("quasi_invariance", small_config(10000));
  CHECK(r.pass);
  // Dual route: the exponential-integral closed form of the gamma density
  // agrees with the generic quadrature construction to near machine level.
  CHECK(std::abs(part(r, "gamma_closed_form").residual) <= 1e-10);
  CHECK(part(r, "unit_theta").residual == 0.0);
  CHECK(part(r, "paired_identity").residual_stderr > 0.0);
}

TEST_CASE("partial action density at finite level", "[verify]") {
  const CheckResult r = run_check("partial_quasi_invariance", small_config(3000));
  CHECK(r.pass);
  CHECK(std::abs(part(r, "reduces_to_theta").residual) <= 1e-6);
  CHECK(part(r, "identity_element").residual == 0.0);
  CHECK(part(r, "expectation_one").rhs == 1.0);
}

TEST_CASE("integration by parts over a direction panel", "[verify]") {
  const CheckResult r = run_check("ibp", small_config(10000));
  REQUIRE(r.parts.size() == 5);
  CHECK(r.pass);
  // Both directions zero: the residual is identically zero, not just small.
  CHECK(part(r, "zero_direction").residual == 0.0);
  CHECK(part(r, "campbell").residual_stderr > 0.0);
}

TEST_CASE("dirichlet form balances the generator", "[verify]") {
  const CheckResult r = run_check("dirichlet_symmetry", small_config(30000));
  REQUIRE(r.parts.size() == 3);
  CHECK(r.pass);
  CHECK(part(r, "form_vs_generator").residual_stderr > 0.0);
  CHECK(part(r, "symmetry").residual_stderr > 0.0);
}

TEST_CASE("intertwining with the one-particle semigroup", "[verify]") {
  const CheckResult r = run_check("intertwining", small_config(4000));
  CHECK(r.pass);
  CHECK(part(r, "t_zero").residual == 0.0);
  const SubResult& fc = part(r, "first_chaos");
  CHECK(fc.lhs_stderr > 0.0);
  CHECK(fc.rhs_stderr > 0.0);
  CHECK(fc.budget > 0.0);
}

TEST_CASE("sampler law is stationary for the dynamics", "[verify]") {
  SECTION("gamma kernel") {
    const CheckResult r = run_check("stationarity", small_config(2000));
    REQUIRE(r.parts.size() == 12);
    CHECK(r.pass);
  }
  SECTION("smoothed log-power kernel") {
    VerifyConfig cfg = small_config(2000);
    cfg.model = IntensityModel::smoothed_log_power(1.0);
    const CheckResult r = run_check("stationarity", cfg);
    CHECK(r.pass);
  }
}

TEST_CASE("recorded numbers are bitwise reproducible", "[verify]") {
  SECTION("same configuration, repeated run") {
    const CheckResult a = run_check("mecke", small_config(5000));
    const CheckResult b = run_check("mecke", small_config(5000));
    REQUIRE(a.parts.size() == b.parts.size());
    CHECK(a.lhs == b.lhs);
    CHECK(a.rhs == b.rhs);
    CHECK(a.residual == b.residual);
    CHECK(a.z == b.z);
    CHECK(a.residual_at_half_eps == b.residual_at_half_eps);
    for (std::size_t i = 0; i < a.parts.size(); ++i) {
      CHECK(a.parts[i].residual == b.parts[i].residual);
      CHECK(a.parts[i].residual_stderr == b.parts[i].residual_stderr);
    }
  }
  SECTION("results do not depend on the worker count") {
    VerifyConfig one = small_config(4000);
    one.workers = 1;
    VerifyConfig three = small_config(4000);
    three.workers = 3;
    const CheckResult a = run_check("ibp", one);
    const CheckResult b = run_check("ibp", three);
    REQUIRE(a.parts.size() == b.parts.size());
    for (std::size_t i = 0; i < a.parts.size(); ++i) {
      CHECK(a.parts[i].lhs == b.parts[i].lhs);
      CHECK(a.parts[i].residual == b.parts[i].residual);
      CHECK(a.parts[i].z == b.parts[i].z);
    }
  }
}

TEST_CASE("negative controls are detected", "[verify]") {
  SECTION("scaled density breaks quasi-invariance") {
    FaultInjection fault;
    fault.density_scale = 1.05;
    const CheckResult r = run_check("quasi_invariance", small_config(5000), fault);
    CHECK_FALSE(r.pass);
    CHECK(std::abs(part(r, "paired_identity").z) > kZGate);
  }
  SECTION("scaled density breaks the partial identity") {
    FaultInjection fault;
    fault.density_scale = 1.05;
    const CheckResult r =
        run_check("partial_quasi_invariance", small_config(2000), fault);
    CHECK_FALSE(r.pass);
    CHECK(std::abs(part(r, "expectation_one").z) > kZGate);
  }
  SECTION("wrong boundary constant breaks integration by parts") {
    FaultInjection fault;
    fault.l_zero_offset = 0.05;
    const CheckResult r = run_check("ibp", small_config(10000), fault);
    CHECK_FALSE(r.pass);
    CHECK(std::abs(part(r, "campbell").z) > kZGate);
    // Directions with no mass component stay clean.
    CHECK(part(r, "zero_direction").residual == 0.0);
  }
  SECTION("flipped drift breaks stationarity") {
    FaultInjection fault;
    fault.flip_drift = true;
    const CheckResult r = run_check("stationarity", small_config(2000), fault);
    CHECK_FALSE(r.pass);
    CHECK_FALSE(r.note.empty());
  }
}

TEST_CASE("check registry", "[verify]") {
  REQUIRE(check_names().size() == 8);
  CHECK(check_names().front() == "laplace");
  CHECK(check_names().back() == "stationarity");
  CHECK_THROWS_AS(run_check("laplase", small_config(10)), std::invalid_argument);
  const auto suite = run_suite(small_config(2000), {"mecke", "laplace"});
  REQUIRE(suite.size() == 2);
  CHECK(suite[0].name == "mecke");
  CHECK(suite[1].name == "laplace");
}
