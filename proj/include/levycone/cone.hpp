#pragma once
// The cone of discrete Radon measures eta = sum_x s_x delta_x with masses
// s_x > 0.  A Poisson measure with intensity lambda(ds) dx realises the
// reference law; since lambda has infinite total mass near s = 0 the
// simulation truncates at a mass floor epsilon and samples the surviving
// intensity band by band.
//
// Bands are dyadic: band 0 carries [1, inf), band k >= 1 carries
// [2^-k, 2^-k+1), and the last band is clipped at epsilon.  Each band draws
// from its own counter-keyed random stream, so lowering epsilon only appends
// new bands: every atom with mass >= 2 epsilon is reproduced bit for bit.
// Functionals supported above the floor therefore couple exactly across
// truncation levels, which turns refinement studies into noiseless
// difference estimates.

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "levycone/intensity.hpp"
#include "levycone/rng.hpp"
#include "levycone/space.hpp"

namespace levycone {

struct Atom {
  double mass = 0.0;
  Point pos{0.0, 0.0, 0.0};
};

struct DiscreteMeasure {
  std::vector<Atom> atoms;
  double truncation = 0.0;   // smallest mass the sampler could have produced
  std::string model_tag;     // which intensity generated the configuration

  std::size_t size() const { return atoms.size(); }
  double total_mass() const {
    double m = 0.0;
    for (const Atom& a : atoms) m += a.mass;
    return m;
  }
  double min_mass() const {
    double m = kInf;
    for (const Atom& a : atoms) m = std::min(m, a.mass);
    return m;
  }
};

// ---------------------------------------------------------------------------
// Sampler for the truncated reference law.

class ConeSampler {
 public:
  struct Band {
    double lo = 0.0, hi = 0.0;  // mass interval [lo, hi)
    double rate = 0.0;          // Poisson mean: lambda([lo,hi)) * vol(X)
    std::shared_ptr<MassSampler> masses;
  };

  ConeSampler(TorusSpace space, IntensityModel model, double epsilon)
      : space_(space), model_(std::move(model)), epsilon_(epsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw std::domain_error("ConeSampler: epsilon must be positive and finite");
    const double vol = space_.volume();
    auto push_band = [&](double lo, double hi) {
      Band b;
      b.lo = lo;
      b.hi = hi;
      b.rate = lambda_interval(model_, lo, hi) * vol;
      b.masses = std::make_shared<MassSampler>(model_, lo, hi);
      bands_.push_back(std::move(b));
    };
    if (epsilon >= 1.0) {
      push_band(epsilon, kInf);
      return;
    }
    push_band(1.0, kInf);
    // Full dyadic bands above the floor, then the clipped remainder.
    int k = 1;
    while (std::ldexp(1.0, -k) > epsilon) {
      push_band(std::ldexp(1.0, -k), std::ldexp(1.0, -k + 1));
      ++k;
    }
    const double hi = std::ldexp(1.0, -k + 1);
    if (epsilon < hi) push_band(epsilon, hi);
  }

  const TorusSpace& space() const { return space_; }
  const IntensityModel& model() const { return model_; }
  double epsilon() const { return epsilon_; }
  const std::vector<Band>& bands() const { return bands_; }

  // Poisson mean of the total atom count.
  double expected_count() const {
    double r = 0.0;
    for (const Band& b : bands_) r += b.rate;
    return r;
  }

  // E[<s 1_{s >= eps}, eta>] = vol * int_eps^inf l(s) ds.
  double expected_total_mass() const {
    auto integrand = [&](double s) {
      const double v = model_.l(s);
      return v == 0.0 ? 0.0 : v * s;  // avoid 0 * inf at the endpoint
    };
    return space_.volume() * integrate_dlog(integrand, epsilon_, kInf).value;
  }

  DiscreteMeasure sample(std::uint64_t seed, std::uint64_t replica = 0) const {
    DiscreteMeasure eta;
    eta.truncation = epsilon_;
    eta.model_tag = model_.name();
    for (std::size_t k = 0; k < bands_.size(); ++k) {
      RandomStream rs(seed, stream::kBand, static_cast<std::uint64_t>(k), replica);
      const std::uint64_t n = rs.poisson(bands_[k].rate);
      for (std::uint64_t j = 0; j < n; ++j) {
        Atom a;
        a.mass = bands_[k].masses->sample(rs);
        for (int i = 0; i < space_.dim; ++i)
          a.pos[static_cast<std::size_t>(i)] = space_.side * rs.uniform();
        eta.atoms.push_back(a);
      }
    }
    return eta;
  }

 private:
  TorusSpace space_;
  IntensityModel model_;
  double epsilon_;
  std::vector<Band> bands_;
};

// ---------------------------------------------------------------------------
// Pairings <f, eta> = sum_x s_x f(x) and marked sums over (s_x, x).

inline double pairing(const TorusSpace& sp, const DiscreteMeasure& eta,
                      const ScalarField& f) {
  double r = 0.0;
  for (const Atom& a : eta.atoms) r += a.mass * f.value(sp, a.pos);
  return r;
}

template <class Fn>
double pairing_fn(const DiscreteMeasure& eta, Fn&& f) {
  double r = 0.0;
  for (const Atom& a : eta.atoms) r += a.mass * f(a.pos);
  return r;
}

// sum_x phi(s_x, x) for a jointly marked integrand.
template <class Fn>
double marked_sum(const DiscreteMeasure& eta, Fn&& phi) {
  double r = 0.0;
  for (const Atom& a : eta.atoms) r += phi(a.mass, a.pos);
  return r;
}

// ---------------------------------------------------------------------------
// Group actions on configurations.

// Multiplication of marks: s_x -> theta(x) s_x.  The reachable mass floor
// shrinks by inf theta, which the metadata tracks.
inline DiscreteMeasure act_theta(const TorusSpace& sp, const DiscreteMeasure& eta,
                                 const PositiveField& theta) {
  DiscreteMeasure out = eta;
  for (Atom& a : out.atoms) a.mass *= theta.value(sp, a.pos);
  out.truncation = eta.truncation * theta.inf(sp);
  return out;
}

template <class Fn>
DiscreteMeasure act_theta_fn(const DiscreteMeasure& eta, Fn&& theta,
                             double theta_inf) {
  DiscreteMeasure out = eta;
  for (Atom& a : out.atoms) a.mass *= theta(a.pos);
  out.truncation = eta.truncation * theta_inf;
  return out;
}

// Push-forward of positions under the time-t flow of v; masses are untouched.
inline DiscreteMeasure act_diffeo(const TorusSpace& sp, const DiscreteMeasure& eta,
                                  const VectorField& v, double t,
                                  double max_step = 1e-3) {
  DiscreteMeasure out = eta;
  for (Atom& a : out.atoms) a.pos = flow(sp, v, t, a.pos, max_step).position;
  return out;
}

// ---------------------------------------------------------------------------
// Mass-threshold restrictions sigma_n eta = eta restricted to {s >= 1/n}.

inline DiscreteMeasure restrict_min_mass(const DiscreteMeasure& eta, double floor) {
  if (!(floor >= 0.0)) throw std::domain_error("restrict_min_mass: floor must be >= 0");
  DiscreteMeasure out;
  out.truncation = std::max(eta.truncation, floor);
  out.model_tag = eta.model_tag;
  for (const Atom& a : eta.atoms)
    if (a.mass >= floor) out.atoms.push_back(a);
  return out;
}

inline DiscreteMeasure restrict_sigma_n(const DiscreteMeasure& eta, int n) {
  if (n < 1) throw std::domain_error("restrict_sigma_n: n must be >= 1");
  return restrict_min_mass(eta, 1.0 / static_cast<double>(n));
}

// Number of atoms with mass in [lo, hi) and position within r of the centre.
inline std::size_t count_in(const TorusSpace& sp, const DiscreteMeasure& eta,
                            double lo, double hi, const Point& center, double r) {
  std::size_t n = 0;
  for (const Atom& a : eta.atoms)
    if (a.mass >= lo && a.mass < hi && d_X(sp, a.pos, center) < r) ++n;
  return n;
}

// Poisson-measure prediction for the count above.
inline double expected_count_in(const TorusSpace& sp, const IntensityModel& model,
                                double lo, double hi, double r) {
  return lambda_interval(model, lo, hi) * torus_ball_volume(sp, r);
}

}  // namespace levycone
