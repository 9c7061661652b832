#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "levycone/intensity.hpp"
#include "levycone/stats.hpp"

using namespace levycone;

namespace {
// Frozen reference values (high-precision exponential-integral evaluations).
constexpr double kE1_1 = 0.21938393439552027;
constexpr double kE1_2 = 0.04890051070806112;
constexpr double kE1_1em6 = 13.238295893062491;
constexpr double kE1_1em4 = 8.633224704574705;

IntensityModel one_over_s() {
  return IntensityModel::custom(
      "one_over_s", [](double s) { return 1.0 / s; },
      [](double s) { return -1.0 / (s * s); },
      std::numeric_limits<double>::infinity());
}
}  // namespace

TEST_CASE("gamma kernel basics", "[intensity]") {
  const auto m = IntensityModel::gamma();
  REQUIRE(m.l(1.0) == Catch::Approx(std::exp(-1.0)).epsilon(1e-15));
  REQUIRE(m.l_prime(2.0) == Catch::Approx(-std::exp(-2.0)).epsilon(1e-15));
  REQUIRE(m.log_derivative(0.123) == -1.0);
  REQUIRE(m.l_zero() == 1.0);
  REQUIRE_THROWS_AS(m.l(0.0), std::domain_error);
  REQUIRE_THROWS_AS(m.l(-1.0), std::domain_error);
}

TEST_CASE("smoothed log-power kernel values and derivative", "[intensity]") {
  const auto m = IntensityModel::smoothed_log_power(1.0);
  REQUIRE(m.l_zero() == 0.0);
  REQUIRE(m.l(1e-6) == Catch::Approx(0.07238233602895894).epsilon(1e-12));
  // log-derivative agrees with a centered difference of log l
  for (double s : {1e-8, 1e-3, 0.1, 1.0, 5.0}) {
    const double h = 1e-5 * s;
    const double fd = (std::log(m.l(s + h)) - std::log(m.l(s - h))) / (2.0 * h);
    REQUIRE(m.log_derivative(s) == Catch::Approx(fd).epsilon(1e-4));
  }
  REQUIRE_THROWS_AS(IntensityModel::smoothed_log_power(0.0), std::domain_error);
  REQUIRE_THROWS_AS(IntensityModel::smoothed_log_power(-2.0), std::domain_error);
}

TEST_CASE("lambda intervals against exponential-integral references", "[intensity]") {
  const auto g = IntensityModel::gamma();
  REQUIRE(lambda_interval(g, 1.0, kInf) == Catch::Approx(kE1_1).epsilon(1e-10));
  REQUIRE(lambda_interval(g, 2.0, kInf) == Catch::Approx(kE1_2).epsilon(1e-10));
  REQUIRE(lambda_interval(g, 1e-6, kInf) == Catch::Approx(kE1_1em6).epsilon(1e-10));
  REQUIRE(lambda_interval(g, 1e-4, kInf) == Catch::Approx(kE1_1em4).epsilon(1e-10));
  REQUIRE(lambda_interval(g, 1e-6, 1.0) ==
          Catch::Approx(kE1_1em6 - kE1_1).epsilon(1e-10));

  const auto p = IntensityModel::smoothed_log_power(1.0);
  REQUIRE(lambda_interval(p, 1e-6, kInf) ==
          Catch::Approx(3.3571793790309606).epsilon(1e-9));
  REQUIRE(lambda_interval(p, 1.0, kInf) ==
          Catch::Approx(0.46830982477711636).epsilon(1e-9));

  REQUIRE_THROWS_AS(lambda_interval(g, 0.0, 1.0), std::domain_error);
  REQUIRE_THROWS_AS(lambda_interval(g, 2.0, 1.0), std::domain_error);
}

TEST_CASE("mass-axis distance: symmetry, additivity, reference value", "[intensity]") {
  const auto g = IntensityModel::gamma();
  REQUIRE(d_lambda(g, 1.0, 2.0) == Catch::Approx(0.17048342368745915).epsilon(1e-10));
  REQUIRE(d_lambda(g, 2.0, 1.0) == Catch::Approx(d_lambda(g, 1.0, 2.0)).epsilon(1e-13));
  REQUIRE(d_lambda(g, 0.5, 0.5) == 0.0);
  // ordered triple: d(a,c) = d(a,b) + d(b,c)
  const double abc = d_lambda(g, 0.3, 4.0);
  REQUIRE(abc == Catch::Approx(d_lambda(g, 0.3, 1.1) + d_lambda(g, 1.1, 4.0))
                     .epsilon(1e-10));
  REQUIRE_THROWS_AS(d_lambda(g, -1.0, 1.0), std::domain_error);
}

TEST_CASE("truncated mass bias", "[intensity]") {
  const auto g = IntensityModel::gamma();
  REQUIRE(truncated_mass_bias(g, 1e-3) ==
          Catch::Approx(1.0 - std::exp(-1e-3)).epsilon(1e-10));
  const auto p = IntensityModel::smoothed_log_power(1.0);
  REQUIRE(truncated_mass_bias(p, 1e-3) ==
          Catch::Approx(1.2807803448059211e-4).epsilon(1e-7));
  // monotone in eps
  REQUIRE(truncated_mass_bias(g, 1e-2) > truncated_mass_bias(g, 1e-3));
  REQUIRE_THROWS_AS(truncated_mass_bias(g, 0.0), std::domain_error);
}

TEST_CASE("mass sampler cdf matches quadrature and inverts cleanly", "[intensity]") {
  const auto g = IntensityModel::gamma();
  const MassSampler ms(g, 1e-6);
  REQUIRE(ms.total_rate() == Catch::Approx(kE1_1em6).epsilon(1e-10));
  // CDF at 1 equals lambda([eps,1]) / lambda([eps,inf)), frozen reference.
  REQUIRE(ms.cdf(1.0) == Catch::Approx(0.9834280834808589).margin(2e-7));
  REQUIRE(ms.cdf(1e-6) == 0.0);
  // quantile is a right inverse of the cdf and is monotone
  double prev = 0.0;
  for (double u : {1e-6, 0.01, 0.1, 0.5, 0.9, 0.99, 0.999999}) {
    const double s = ms.quantile(u);
    REQUIRE(s >= ms.lo());
    REQUIRE(ms.cdf(s) == Catch::Approx(u).margin(1e-12));
    REQUIRE(s > prev);
    prev = s;
  }
  REQUIRE_THROWS_AS(ms.quantile(1.0), std::domain_error);
  REQUIRE_THROWS_AS(ms.quantile(-0.1), std::domain_error);
  REQUIRE_THROWS_AS(MassSampler(g, 0.0), std::domain_error);
  REQUIRE_THROWS_AS(MassSampler(g, 2.0, 1.0), std::domain_error);
}

TEST_CASE("mass sampler draws follow the restricted intensity", "[intensity]") {
  const auto g = IntensityModel::gamma();
  const MassSampler ms(g, 1.0);  // restriction to masses >= 1
  RandomStream rs(7, stream::kScratch);
  const int n = 20000;
  std::vector<double> draws;
  draws.reserve(n);
  Welford w;
  for (int i = 0; i < n; ++i) {
    const double s = ms.sample(rs);
    REQUIRE(s >= 1.0);
    draws.push_back(s);
    w.add(s);
  }
  // E[s | s >= 1] = e^{-1} / E1(1), frozen reference.
  REQUIRE(std::abs(w.mean - 1.6768750281787009) < 4.0 * w.std_error());
  // KS against the sampler's own cdf (which is independently validated above)
  const double d = ks_statistic(draws, [&](double s) { return ms.cdf(s); });
  REQUIRE(d < ks_threshold(n, 0, 0.01));
}

TEST_CASE("restricted band sampler stays inside its band", "[intensity]") {
  const auto p = IntensityModel::smoothed_log_power(1.0);
  const MassSampler band(p, 0.25, 0.5);
  RandomStream rs(9, stream::kScratch);
  for (int i = 0; i < 2000; ++i) {
    const double s = band.sample(rs);
    REQUIRE(s >= 0.25);
    REQUIRE(s <= 0.5);
  }
  REQUIRE(band.total_rate() == Catch::Approx(lambda_interval(p, 0.25, 0.5)).epsilon(1e-10));
}

TEST_CASE("sample_mass convenience draw", "[intensity]") {
  RandomStream rs(11, stream::kScratch);
  const double s = sample_mass(IntensityModel::gamma(), 0.5, rs);
  REQUIRE(s >= 0.5);
}

TEST_CASE("admissibility report for the shipped models", "[intensity]") {
  for (const auto& m : {IntensityModel::gamma(),
                        IntensityModel::smoothed_log_power(1.0),
                        IntensityModel::smoothed_log_power(2.5)}) {
    const auto rep = check_conditions(m, 4);
    INFO(m.name());
    REQUIRE(rep.all_satisfied());
    REQUIRE(rep.entries.size() == 7);
  }
  const auto gam = check_conditions(IntensityModel::gamma(), 4);
  REQUIRE(gam.find("levy_integrability").value ==
          Catch::Approx(0.8515044932240780).epsilon(1e-6));
  // sup_{(0,1/2]} s l'/(l log s) for gamma peaks at the endpoint: 1/(2 log 2)
  REQUIRE(gam.find("sde_drift_log").value ==
          Catch::Approx(0.5 / std::log(2.0)).epsilon(1e-6));
  REQUIRE(gam.find("sde_drift_growth").value <= 0.0);

  const auto lp = check_conditions(IntensityModel::smoothed_log_power(1.0), 4);
  REQUIRE(lp.find("levy_integrability").value ==
          Catch::Approx(0.9714002527681563).epsilon(1e-4));
}

TEST_CASE("non-integrable custom kernel is rejected", "[intensity]") {
  const auto rep = check_conditions(one_over_s(), 3);
  REQUIRE_FALSE(rep.all_satisfied());
  REQUIRE_FALSE(rep.find("levy_integrability").satisfied);
  REQUIRE_THROWS_AS(rep.find("no_such_condition"), std::out_of_range);
}
