#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "levycone/dynamics.hpp"
#include "levycone/functionals.hpp"
#include "levycone/stats.hpp"

using namespace levycone;

namespace {

TorusSpace make_space() { return TorusSpace(2, 1.0); }

DiscreteMeasure make_initial(const TorusSpace& sp, const IntensityModel& model,
                             double eps, std::uint64_t seed) {
  return ConeSampler(sp, model, eps).sample(seed);
}

// Covariance z-score of two paired samples; under independence the sample
// covariance has standard error ~ sd(a) sd(b) / sqrt(n).
double cov_z(const std::vector<double>& a, const std::vector<double>& b) {
  Welford wa, wb;
  for (double x : a) wa.add(x);
  for (double x : b) wb.add(x);
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    cov += (a[i] - wa.mean) * (b[i] - wb.mean);
  cov /= static_cast<double>(a.size() - 1);
  const double se = wa.stddev() * wb.stddev() / std::sqrt(static_cast<double>(a.size()));
  return cov / se;
}

}  // namespace

TEST_CASE("log-mass drift", "[dynamics]") {
  SECTION("gamma kernel gives -e^y / 2 exactly") {
    const IntensityModel gamma = IntensityModel::gamma();
    for (double y : {-3.0, -0.5, 0.0, 1.2, 4.0}) {
      REQUIRE_THAT(mass_drift(gamma, y),
                   Catch::Matchers::WithinRel(-0.5 * std::exp(y), 1e-14));
    }
  }

  SECTION("matches the finite difference of (1/2) log l(e^y)") {
    const double h = 1e-5;
    for (const IntensityModel& model :
         {IntensityModel::gamma(), IntensityModel::smoothed_log_power(1.2)}) {
      for (double y : {-2.0, -0.3, 0.8, 2.0}) {
        const double fd = (std::log(model.l(std::exp(y + h))) -
                           std::log(model.l(std::exp(y - h)))) /
                          (2.0 * h);
        REQUIRE_THAT(mass_drift(model, y),
                     Catch::Matchers::WithinRel(0.5 * fd, 1e-6));
      }
    }
  }

  SECTION("vanishes at the small-mass end") {
    const IntensityModel gamma = IntensityModel::gamma();
    REQUIRE(mass_drift(gamma, -800.0) == 0.0);  // e^y underflows to zero
    REQUIRE(std::abs(mass_drift(gamma, -40.0)) < 1e-17);
    const IntensityModel lp = IntensityModel::smoothed_log_power(1.0);
    REQUIRE(std::abs(mass_drift(lp, -700.0)) < 1e-3);
  }
}

TEST_CASE("single-atom weak Euler step", "[dynamics]") {
  // One macro step of length t: E[Y(t) - Y(0)] = b(Y0) t + O(t^2).
  const TorusSpace sp = make_space();
  const double t = 1e-3;
  const std::size_t reps = 40000;
  for (const IntensityModel& model :
       {IntensityModel::gamma(), IntensityModel::smoothed_log_power(1.2)}) {
    DiscreteMeasure eta0;
    eta0.atoms.push_back({3.0, {0.5, 0.5, 0.0}});
    const double y0 = std::log(3.0);
    Welford w;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      ParticleSystem ps(sp, model, eta0, 9001, rep);
      ps.step(t);
      w.add(std::log(ps.measure().atoms[0].mass) - y0);
    }
    const double drift = mass_drift(model, y0) * t;
    REQUIRE_THAT(w.mean, Catch::Matchers::WithinAbs(drift, 4.0 * w.std_error()));
    // The drift itself is resolvable at this replication level.
    REQUIRE(std::abs(drift) > 4.0 * w.std_error());
  }
}

TEST_CASE("atoms evolve independently", "[dynamics]") {
  const TorusSpace sp = make_space();
  const IntensityModel gamma = IntensityModel::gamma();
  DiscreteMeasure eta0;
  eta0.atoms.push_back({1.0, {0.2, 0.3, 0.0}});
  eta0.atoms.push_back({0.5, {0.7, 0.8, 0.0}});

  const std::size_t reps = 5000;
  std::vector<double> dy1, dy2, dx1, dx2;
  dy1.reserve(reps);
  for (std::size_t rep = 0; rep < reps; ++rep) {
    ParticleSystem ps(sp, gamma, eta0, 5150, rep);
    ps.step(1e-2);
    const DiscreteMeasure eta = ps.measure();
    dy1.push_back(std::log(eta.atoms[0].mass / eta0.atoms[0].mass));
    dy2.push_back(std::log(eta.atoms[1].mass / eta0.atoms[1].mass));
    dx1.push_back(displacement(sp, eta0.atoms[0].pos, eta.atoms[0].pos)[0]);
    dx2.push_back(displacement(sp, eta0.atoms[1].pos, eta.atoms[1].pos)[1]);
  }
  REQUIRE(std::abs(cov_z(dy1, dy2)) < 4.0);  // mass vs mass, across atoms
  REQUIRE(std::abs(cov_z(dy1, dx2)) < 4.0);  // mass vs position, across atoms
  REQUIRE(std::abs(cov_z(dx1, dx2)) < 4.0);  // position vs position
  REQUIRE(std::abs(cov_z(dy1, dx1)) < 4.0);  // mass vs own position
}

TEST_CASE("evolution snapshots", "[dynamics]") {
  const TorusSpace sp = make_space();
  const IntensityModel gamma = IntensityModel::gamma();
  const DiscreteMeasure eta0 = make_initial(sp, gamma, 1e-3, 77);
  REQUIRE(eta0.size() > 0);

  SECTION("t = 0 echoes the initial measure bit for bit") {
    const auto out = evolve(sp, gamma, eta0, {0.0}, 1e-3, 31);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].size() == eta0.size());
    REQUIRE(out[0].truncation == eta0.truncation);
    for (std::size_t i = 0; i < eta0.size(); ++i) {
      REQUIRE(out[0].atoms[i].mass == eta0.atoms[i].mass);
      REQUIRE(out[0].atoms[i].pos == eta0.atoms[i].pos);
    }
  }

  SECTION("the diffusion is conservative and keeps atom identity") {
    StepDiagnostics diag;
    const auto out = evolve(sp, gamma, eta0, {0.0, 0.02, 0.05}, 1e-3, 31, 0, &diag);
    REQUIRE(out.size() == 3);
    for (const DiscreteMeasure& eta : out) {
      REQUIRE(eta.size() == eta0.size());
      REQUIRE(eta.min_mass() > 0.0);
      REQUIRE(eta.model_tag == eta0.model_tag);
    }
    // Evolved snapshots no longer carry the sampler's mass floor.
    REQUIRE(out[1].truncation == 0.0);
    REQUIRE(diag.mass_steps >= 50 * eta0.size());
    // Atom i of the snapshot continues atom i of eta0: over t = 0.05 the
    // log-mass moves a few sqrt(t), nowhere near a reshuffling distance.
    for (std::size_t i = 0; i < eta0.size(); ++i) {
      REQUIRE(std::abs(std::log(out[2].atoms[i].mass / eta0.atoms[i].mass)) < 2.5);
      REQUIRE(out[2].atoms[i].mass != eta0.atoms[i].mass);
    }
  }

  SECTION("snapshot grid does not perturb the path") {
    // Both grids induce the same macro-step sequence, so the endpoint agrees
    // bitwise; snapshots only read the state.
    const auto a = evolve(sp, gamma, eta0, {0.01}, 5e-3, 31);
    const auto b = evolve(sp, gamma, eta0, {0.005, 0.01}, 5e-3, 31);
    REQUIRE(a.back().atoms.size() == b.back().atoms.size());
    for (std::size_t i = 0; i < a.back().size(); ++i) {
      REQUIRE(a.back().atoms[i].mass == b.back().atoms[i].mass);
      REQUIRE(a.back().atoms[i].pos == b.back().atoms[i].pos);
    }
  }

  SECTION("seeding is deterministic and replica-sensitive") {
    const auto a = evolve(sp, gamma, eta0, {0.03}, 1e-3, 31, 4);
    const auto b = evolve(sp, gamma, eta0, {0.03}, 1e-3, 31, 4);
    const auto c = evolve(sp, gamma, eta0, {0.03}, 1e-3, 32, 4);
    const auto d = evolve(sp, gamma, eta0, {0.03}, 1e-3, 31, 5);
    bool differs_seed = false, differs_replica = false;
    for (std::size_t i = 0; i < eta0.size(); ++i) {
      REQUIRE(a[0].atoms[i].mass == b[0].atoms[i].mass);
      REQUIRE(a[0].atoms[i].pos == b[0].atoms[i].pos);
      differs_seed = differs_seed || a[0].atoms[i].mass != c[0].atoms[i].mass;
      differs_replica = differs_replica || a[0].atoms[i].mass != d[0].atoms[i].mass;
    }
    REQUIRE(differs_seed);
    REQUIRE(differs_replica);
  }

  SECTION("guards") {
    REQUIRE_THROWS_AS(evolve(sp, gamma, eta0, {0.01}, 0.0, 1), std::domain_error);
    REQUIRE_THROWS_AS(evolve(sp, gamma, eta0, {0.01}, 2e-2, 1), std::domain_error);
    REQUIRE_THROWS_AS(evolve(sp, gamma, eta0, {0.02, 0.01}, 1e-3, 1), std::domain_error);
    DiscreteMeasure bad = eta0;
    bad.atoms[0].mass = 0.0;
    REQUIRE_THROWS_AS(ParticleSystem(sp, gamma, bad, 1), std::domain_error);
    ParticleSystem ps(sp, gamma, eta0, 1);
    REQUIRE_THROWS_AS(ps.step(0.0), std::domain_error);
    REQUIRE_THROWS_AS(ps.step(0.011), std::domain_error);
  }
}

TEST_CASE("Markov property of the particle system", "[dynamics]") {
  // Two legs of length t with independent seeds agree in law with one leg of
  // length 2t; compared through a cylinder observable with a two-sample
  // Kolmogorov-Smirnov test at the 1% level.
  const TorusSpace sp = make_space();
  const IntensityModel gamma = IntensityModel::gamma();
  const DiscreteMeasure eta0 = make_initial(sp, gamma, 1e-3, 4001);
  const MassProfile chi(0.05, 50.0, 0.25);
  const ScalarField u = ScalarField::fourier({1, 1, 0}, 0.8, 0.4);

  const double t = 0.05, dt = 2.5e-3;
  const std::size_t reps = 10000;
  std::vector<double> chained, direct;
  chained.reserve(reps);
  direct.reserve(reps);
  for (std::size_t rep = 0; rep < reps; ++rep) {
    const DiscreteMeasure mid = evolve(sp, gamma, eta0, {t}, dt, 111, rep)[0];
    const DiscreteMeasure far = evolve(sp, gamma, mid, {t}, dt, 222, rep)[0];
    chained.push_back(marked_pairing(sp, far, chi, u));
    const DiscreteMeasure one = evolve(sp, gamma, eta0, {2.0 * t}, dt, 333, rep)[0];
    direct.push_back(marked_pairing(sp, one, chi, u));
  }
  const double ks = ks_statistic_two_sample(chained, direct);
  REQUIRE(ks < ks_threshold(reps, reps, 0.01));
}

TEST_CASE("step displacement scales like sqrt(dt)", "[dynamics]") {
  // The largest per-step log-mass move over a fixed horizon behaves like
  // sqrt(dt) up to the extreme-value log factor; the fitted log-log slope
  // must sit within 20% of the log-corrected exponent.
  const TorusSpace sp = make_space();
  const IntensityModel gamma = IntensityModel::gamma();
  DiscreteMeasure eta0;
  eta0.atoms.push_back({1.0, {0.5, 0.5, 0.0}});

  const double horizon = 0.1;
  const std::vector<double> dts = {4e-3, 1e-3, 2.5e-4};
  std::vector<double> log_dt, log_disp;
  for (double dt : dts) {
    Welford w;
    for (std::uint64_t rep = 0; rep < 60; ++rep) {
      ParticleSystem ps(sp, gamma, eta0, 650, rep);
      double prev = 0.0;
      double max_step = 0.0;
      while (ps.time() < horizon - 1e-12) {
        ps.step(dt);
        const double y = std::log(ps.measure().atoms[0].mass);
        max_step = std::max(max_step, std::abs(y - prev));
        prev = y;
      }
      w.add(max_step);
    }
    log_dt.push_back(std::log(dt));
    log_disp.push_back(std::log(w.mean));
  }
  const double slope = fit_line(log_dt, log_disp).slope;
  // max of n ~ horizon/dt Gaussian steps ~ sqrt(2 dt log n), which bends the
  // pure 1/2 exponent down by 1/(2 log(horizon/dt)) at the grid midpoint.
  const double expected = 0.5 - 0.5 / std::log(horizon / 1e-3);
  REQUIRE_THAT(slope, Catch::Matchers::WithinAbs(expected, 0.2 * expected));
}

TEST_CASE("substep halving controls a stiff drift", "[dynamics]") {
  const TorusSpace sp = make_space();
  const IntensityModel gamma = IntensityModel::gamma();
  DiscreteMeasure heavy;
  heavy.atoms.push_back({1e4, {0.5, 0.5, 0.0}});  // |b| dt = 50 at dt = 1e-2

  ParticleSystem ps(sp, gamma, heavy, 12);
  ps.step(1e-2);
  REQUIRE(ps.diagnostics().halvings >= 6);
  REQUIRE(ps.diagnostics().mass_steps > 1);
  const double m = ps.measure().atoms[0].mass;
  REQUIRE(std::isfinite(m));
  REQUIRE(m > 0.0);
  REQUIRE(m < 1e4);  // the strong downward drift must have bitten

  DiscreteMeasure absurd;
  absurd.atoms.push_back({1e300, {0.5, 0.5, 0.0}});
  ParticleSystem stuck(sp, gamma, absurd, 12);
  REQUIRE_THROWS_AS(stuck.step(1e-2), std::runtime_error);
}

TEST_CASE("one-particle semigroup", "[dynamics]") {
  const TorusSpace sp = make_space();
  const IntensityModel gamma = IntensityModel::gamma();

  SECTION("t = 0 evaluates the function") {
    const MarkFunction phi{MassProfile(0.3, 4.0, 0.25),
                           ScalarField::bump({0.4, 0.6, 0.0}, 0.3, 0.9)};
    const Point x0{0.45, 0.55, 0.0};
    const SemigroupEstimate est =
        one_particle_semigroup(sp, gamma, phi, 1.7, x0, 0.0, 1e-3, 10, 5);
    REQUIRE(est.value == phi.chi.value(1.7) * phi.u.value(sp, x0));
    REQUIRE(est.std_error == 0.0);
    REQUIRE(est.exact_position);
  }

  SECTION("a flat function is conserved exactly") {
    // chi == 1 across every mass the paths can reach, u == const: each
    // replica contributes exactly the same value, so the estimate is exact
    // with zero standard error.
    const MarkFunction phi{MassProfile(0.005, 200.0, 0.1),
                           ScalarField::fourier({0, 0, 0}, 0.7)};
    const SemigroupEstimate est = one_particle_semigroup(
        sp, gamma, phi, 1.0, {0.2, 0.2, 0.0}, 0.1, 1e-3, 2000, 99);
    REQUIRE(est.value == 0.7);
    REQUIRE(est.std_error == 0.0);
    REQUIRE(est.exact_position);
  }

  SECTION("exact position factor agrees with joint sampling") {
    const MarkFunction phi{MassProfile(0.3, 4.0, 0.25),
                           ScalarField::fourier({1, 0, 0}, 0.8, 0.3)};
    const double s0 = 1.1, t = 0.05, dt = 1e-3;
    const Point x0{0.15, 0.6, 0.0};
    const std::size_t reps = 20000;
    const SemigroupEstimate est =
        one_particle_semigroup(sp, gamma, phi, s0, x0, t, dt, reps, 314);
    REQUIRE(est.exact_position);

    Welford joint;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      RandomStream rs(314, stream::kScratch, rep);
      double y = std::log(s0);
      double rem = t;
      while (rem > 0.0) {
        const double h = std::min(dt, rem);
        y = detail::mass_step(gamma, y, h, rs, nullptr);
        rem -= h;
      }
      const Point end = brownian_increment(sp, x0, t, rs);
      joint.add(phi.chi.value(std::exp(y)) * phi.u.value(sp, end));
    }
    const double sigma = std::sqrt(est.std_error * est.std_error +
                                   joint.std_error() * joint.std_error());
    REQUIRE_THAT(est.value, Catch::Matchers::WithinAbs(joint.mean, 4.0 * sigma));
    // Folding the heat factor in analytically must actually help.
    REQUIRE(est.std_error < joint.std_error());
  }

  SECTION("short-time difference quotient recovers the generator") {
    // Richardson-extrapolated quotient: per replica evaluate chi along one
    // mass path at t/2 and t, combine (4 D(t/2) - D(t)) / 3 pointwise so the
    // O(t) term cancels inside the average, leaving O(t^2) bias.
    const MassProfile chi(0.3, 4.0, 0.25);
    const ScalarField u = ScalarField::fourier({1, 1, 0}, 0.8, 0.5);
    const double s0 = std::exp(-0.9);  // on the lower ramp: mass jet nonzero
    const Point x0{0.15, 0.35, 0.0};
    const double t = 0.005, dt = 1e-4;
    const double phi0 = chi.value(s0) * u.value(sp, x0);
    const double f_half = std::exp(-0.25 * u.laplace_eigenvalue(sp) * t) * u.value(sp, x0);
    const double f_full = std::exp(-0.5 * u.laplace_eigenvalue(sp) * t) * u.value(sp, x0);

    Welford w;
    for (std::size_t rep = 0; rep < 200000; ++rep) {
      RandomStream rs(271828, stream::kScratch, rep);
      double y = std::log(s0);
      double rem = 0.5 * t;
      while (rem > 0.0) {
        const double h = std::min(dt, rem);
        y = detail::mass_step(gamma, y, h, rs, nullptr);
        rem -= h;
      }
      const double chi_half = chi.value(std::exp(y));
      rem = 0.5 * t;
      while (rem > 0.0) {
        const double h = std::min(dt, rem);
        y = detail::mass_step(gamma, y, h, rs, nullptr);
        rem -= h;
      }
      const double chi_full = chi.value(std::exp(y));
      const double d_half = (f_half * chi_half - phi0) / (0.5 * t);
      const double d_full = (f_full * chi_full - phi0) / t;
      w.add((4.0 * d_half - d_full) / 3.0);
    }
    const double gen = one_particle_generator(sp, gamma, chi, u, s0, x0);
    REQUIRE(std::abs(gen) > 1.0);  // the target is far from trivial
    REQUIRE_THAT(w.mean,
                 Catch::Matchers::WithinAbs(gen, 4.0 * w.std_error() + 50.0 * t * t));
  }

  SECTION("guards") {
    const MarkFunction phi{MassProfile(0.3, 4.0, 0.25),
                           ScalarField::fourier({1, 0, 0}, 0.8)};
    const Point x0{0.1, 0.1, 0.0};
    REQUIRE_THROWS_AS(one_particle_semigroup(sp, gamma, phi, 0.0, x0, 0.1, 1e-3, 10, 1),
                      std::domain_error);
    REQUIRE_THROWS_AS(one_particle_semigroup(sp, gamma, phi, 1.0, x0, -0.1, 1e-3, 10, 1),
                      std::domain_error);
    REQUIRE_THROWS_AS(one_particle_semigroup(sp, gamma, phi, 1.0, x0, 0.1, 0.02, 10, 1),
                      std::domain_error);
    REQUIRE_THROWS_AS(one_particle_semigroup(sp, gamma, phi, 1.0, x0, 0.1, 1e-3, 0, 1),
                      std::domain_error);
  }
}

TEST_CASE("Fourier modes diagonalize the Laplacian", "[dynamics]") {
  const TorusSpace sp = make_space();
  const ScalarField u = ScalarField::fourier({2, 1, 0}, 0.7, 0.3);
  const double q = u.laplace_eigenvalue(sp);
  REQUIRE_THAT(q, Catch::Matchers::WithinRel(4.0 * M_PI * M_PI * 5.0, 1e-12));
  for (const Point& x : {Point{0.1, 0.2, 0.0}, Point{0.77, 0.33, 0.0}}) {
    REQUIRE_THAT(u.laplacian(sp, x),
                 Catch::Matchers::WithinRel(-q * u.value(sp, x), 1e-10));
  }
  const ScalarField bump = ScalarField::bump({0.5, 0.5, 0.0}, 0.2, 1.0);
  REQUIRE_THROWS_AS(bump.laplace_eigenvalue(sp), std::domain_error);
}

TEST_CASE("absorbed squared Bessel process", "[dynamics]") {
  SECTION("closed-form limits") {
    // Far from the boundary nothing is absorbed; the oracle is astronomically
    // small and the empirical count is exactly zero.
    const BesselAbsorption far = bessel_absorption(200.0, 1.0, 1e-3, 1500, 21);
    REQUIRE(far.probability == 0.0);
    REQUIRE(far.oracle < 1e-50);

    // Long horizons absorb almost surely.
    const BesselAbsorption late = bessel_absorption(1.0, 6.0, 1e-3, 1500, 22);
    REQUIRE(late.probability > 0.98);
    REQUIRE_THAT(late.probability, Catch::Matchers::WithinAbs(late.oracle, 0.012));
  }

  SECTION("matches the absorption oracle at s = 1, t = 1") {
    const BesselAbsorption ba = bessel_absorption(1.0, 1.0, 2e-4, 20000, 23);
    REQUIRE_THAT(ba.oracle,
                 Catch::Matchers::WithinRel(std::exp(-1.0 / (std::exp(1.0) - 1.0)), 1e-14));
    REQUIRE_THAT(ba.probability,
                 Catch::Matchers::WithinAbs(ba.oracle, 3.0 * ba.std_error + 1.5 * std::sqrt(2e-4)));
    REQUIRE_FALSE(ba.dt_warning);
    // The Monte Carlo cleanly rejects the alternative normalization.
    REQUIRE(std::abs(ba.probability - ba.alt_form) > 10.0 * ba.std_error);
    // Determinism.
    const BesselAbsorption again = bessel_absorption(1.0, 1.0, 2e-4, 20000, 23);
    REQUIRE(again.probability == ba.probability);
  }

  SECTION("coarse steps raise the resolution warning") {
    const BesselAbsorption coarse = bessel_absorption(0.25, 1.0, 0.05, 4000, 24);
    REQUIRE(coarse.dt_warning);
  }

  SECTION("guards") {
    REQUIRE_THROWS_AS(bessel_absorption(0.0, 1.0, 1e-3, 10, 1), std::domain_error);
    REQUIRE_THROWS_AS(bessel_absorption(1.0, 0.0, 1e-3, 10, 1), std::domain_error);
    REQUIRE_THROWS_AS(bessel_absorption(1.0, 1.0, 0.0, 10, 1), std::domain_error);
    REQUIRE_THROWS_AS(bessel_absorption(1.0, 1.0, 1e-3, 0, 1), std::domain_error);
  }
}
