#pragma once
// Cylinder functions F(eta) = g(<<phi_1, eta>>, ..., <<phi_N, eta>>) with
// phi_k(s, x) = chi_k(s) u_k(x), where chi is a smooth plateau in log-mass
// and u a smooth field on X.  The whole differential calculus of the cone is
// explicit on this class:
//
//   grad_x F  = sum_k d_k g . chi_k(s) grad u_k(x)          (space direction)
//   grad_y F  = sum_k d_k g . (s d/ds chi_k)(s) u_k(x)       (log-mass direction)
//
// and the generator applies, atom by atom,
//
//   Delta^X   = second space derivatives,
//   Delta^R+  = d^2/dy^2 + s (l'/l)(s) d/dy     in y = log s,
//
// so that L F = 1/2 sum_atoms (Delta^X + Delta^R+) F.  Each formula here is
// checked against finite differences of F itself in the test-suite.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "levycone/cone.hpp"
#include "levycone/intensity.hpp"
#include "levycone/space.hpp"

namespace levycone {

// ---------------------------------------------------------------------------
// C^infty step: 0 on (-inf, 0], 1 on [1, inf), strictly increasing between.

struct SmoothStepValue {
  double s = 0.0, ds = 0.0, d2s = 0.0;
};

inline SmoothStepValue smooth_step(double t) {
  SmoothStepValue r;
  if (t <= 0.0) return r;           // 0 with flat derivatives
  if (t >= 1.0) {
    r.s = 1.0;
    return r;
  }
  const double a = std::exp(-1.0 / t);
  const double b = std::exp(-1.0 / (1.0 - t));
  const double t2 = t * t, o = 1.0 - t, o2 = o * o;
  const double ap = a / t2;
  const double bp = -b / o2;
  const double app = a / (t2 * t2) - 2.0 * a / (t2 * t);
  const double bpp = b / (o2 * o2) - 2.0 * b / (o2 * o);
  const double d = a + b, dp = ap + bp;
  const double u = ap * b - a * bp;       // numerator of S'
  const double up = app * b - a * bpp;    // its derivative
  r.s = a / d;
  r.ds = u / (d * d);
  r.d2s = (up * d - 2.0 * u * dp) / (d * d * d);
  return r;
}

// ---------------------------------------------------------------------------
// Smooth plateau in log-mass: 0 below s_lo, 1 on the inner window, 0 above
// s_hi.  Stored and differentiated in y = log s, which is the natural
// coordinate of the mass direction.

class MassProfile {
 public:
  MassProfile(double s_lo, double s_hi, double ramp_fraction)
      : a_(std::log(s_lo)), b_(std::log(s_hi)) {
    if (!(s_lo > 0.0) || !(s_hi > s_lo) || !std::isfinite(s_hi))
      throw std::domain_error("MassProfile: need 0 < s_lo < s_hi < inf");
    if (!(ramp_fraction > 0.0) || ramp_fraction > 0.5)
      throw std::domain_error("MassProfile: ramp_fraction must lie in (0, 1/2]");
    tau_ = ramp_fraction * (b_ - a_);
    s_lo_ = s_lo;
    s_hi_ = s_hi;
  }

  double s_lo() const { return s_lo_; }
  double s_hi() const { return s_hi_; }
  // Smallest n with supp chi inside {s >= 1/n}.
  int level() const { return static_cast<int>(std::ceil(1.0 / s_lo_)); }

  // The four log-mass points where ramps start and end; quadratures against
  // chi should subdivide here, since the profile is identically 0 or 1
  // in between and a global adaptive pass can overlook the ramps entirely.
  std::array<double, 4> ramp_breaks_y() const {
    return {a_, a_ + tau_, b_ - tau_, b_};
  }

  double value(double s) const { return eval(std::log(s)).s; }
  // d chi / dy = s chi'(s).
  double dlog(double s) const { return eval(std::log(s)).ds; }
  // d^2 chi / dy^2 = s^2 chi''(s) + s chi'(s).
  double d2log(double s) const { return eval(std::log(s)).d2s; }

  struct Jet {
    double v = 0.0, dy = 0.0, dyy = 0.0;
  };
  Jet jet(double s) const {
    const SmoothStepValue r = eval(std::log(s));
    return {r.s, r.ds, r.d2s};
  }

 private:
  SmoothStepValue eval(double y) const {
    const SmoothStepValue lo = smooth_step((y - a_) / tau_);
    const SmoothStepValue hi = smooth_step((b_ - y) / tau_);
    SmoothStepValue r;
    r.s = lo.s * hi.s;
    r.ds = lo.ds / tau_ * hi.s - lo.s * hi.ds / tau_;
    r.d2s = lo.d2s / (tau_ * tau_) * hi.s - 2.0 * lo.ds * hi.ds / (tau_ * tau_) +
            lo.s * hi.d2s / (tau_ * tau_);
    return r;
  }

  double a_, b_, tau_ = 0.0, s_lo_ = 0.0, s_hi_ = 0.0;
};

// One marked test function phi(s, x) = chi(s) u(x).
struct MarkFunction {
  MassProfile chi;
  ScalarField u;
};

template <class Chi, class U>
double marked_pairing(const TorusSpace& sp, const DiscreteMeasure& eta,
                      const Chi& chi, const U& u) {
  double r = 0.0;
  for (const Atom& a : eta.atoms) r += chi.value(a.mass) * u.value(sp, a.pos);
  return r;
}

inline double marked_pairing(const TorusSpace& sp, const DiscreteMeasure& eta,
                             const MarkFunction& phi) {
  return marked_pairing(sp, eta, phi.chi, phi.u);
}

// ---------------------------------------------------------------------------
// Outer functions g : R^N -> R (N <= 4) with exact gradient and Hessian.

class OuterFunction {
 public:
  static constexpr std::size_t kMaxArity = 4;
  using Vec = std::array<double, kMaxArity>;
  using Mat = std::array<std::array<double, kMaxArity>, kMaxArity>;

  enum class Kind { kAffine, kSquare, kProduct, kTanh };

  // c0 + sum c_k z_k
  static OuterFunction affine(std::vector<double> c, double c0 = 0.0) {
    return OuterFunction(Kind::kAffine, std::move(c), c0);
  }
  // (c0 + sum c_k z_k)^2
  static OuterFunction square(std::vector<double> c, double c0 = 0.0) {
    return OuterFunction(Kind::kSquare, std::move(c), c0);
  }
  // prod_k z_k
  static OuterFunction product(std::size_t arity) {
    return OuterFunction(Kind::kProduct, std::vector<double>(arity, 1.0), 0.0);
  }
  // tanh(c0 + sum c_k z_k): bounded, handy for identities under fat tails
  static OuterFunction tanh_affine(std::vector<double> c, double c0 = 0.0) {
    return OuterFunction(Kind::kTanh, std::move(c), c0);
  }

  std::size_t arity() const { return c_.size(); }

  double value(const Vec& z) const {
    switch (kind_) {
      case Kind::kAffine:
        return w(z);
      case Kind::kSquare: {
        const double v = w(z);
        return v * v;
      }
      case Kind::kProduct: {
        double p = 1.0;
        for (std::size_t k = 0; k < arity(); ++k) p *= z[k];
        return p;
      }
      case Kind::kTanh:
        return std::tanh(w(z));
    }
    return 0.0;
  }

  Vec gradient(const Vec& z) const {
    Vec g{0.0, 0.0, 0.0, 0.0};
    switch (kind_) {
      case Kind::kAffine:
        for (std::size_t k = 0; k < arity(); ++k) g[k] = c_[k];
        return g;
      case Kind::kSquare: {
        const double v = w(z);
        for (std::size_t k = 0; k < arity(); ++k) g[k] = 2.0 * v * c_[k];
        return g;
      }
      case Kind::kProduct:
        for (std::size_t k = 0; k < arity(); ++k) {
          double p = 1.0;
          for (std::size_t j = 0; j < arity(); ++j)
            if (j != k) p *= z[j];
          g[k] = p;
        }
        return g;
      case Kind::kTanh: {
        const double th = std::tanh(w(z));
        const double sech2 = 1.0 - th * th;
        for (std::size_t k = 0; k < arity(); ++k) g[k] = sech2 * c_[k];
        return g;
      }
    }
    return g;
  }

  Mat hessian(const Vec& z) const {
    Mat h{};
    switch (kind_) {
      case Kind::kAffine:
        return h;
      case Kind::kSquare:
        for (std::size_t i = 0; i < arity(); ++i)
          for (std::size_t j = 0; j < arity(); ++j) h[i][j] = 2.0 * c_[i] * c_[j];
        return h;
      case Kind::kProduct:
        for (std::size_t i = 0; i < arity(); ++i)
          for (std::size_t j = 0; j < arity(); ++j) {
            if (i == j) continue;
            double p = 1.0;
            for (std::size_t k = 0; k < arity(); ++k)
              if (k != i && k != j) p *= z[k];
            h[i][j] = p;
          }
        return h;
      case Kind::kTanh: {
        const double th = std::tanh(w(z));
        const double sech2 = 1.0 - th * th;
        const double f2 = -2.0 * th * sech2;
        for (std::size_t i = 0; i < arity(); ++i)
          for (std::size_t j = 0; j < arity(); ++j) h[i][j] = f2 * c_[i] * c_[j];
        return h;
      }
    }
    return h;
  }

 private:
  OuterFunction(Kind kind, std::vector<double> c, double c0)
      : kind_(kind), c_(std::move(c)), c0_(c0) {
    if (c_.empty() || c_.size() > kMaxArity)
      throw std::domain_error("OuterFunction: arity must be 1..4");
  }
  double w(const Vec& z) const {
    double v = c0_;
    for (std::size_t k = 0; k < arity(); ++k) v += c_[k] * z[k];
    return v;
  }

  Kind kind_;
  std::vector<double> c_;
  double c0_;
};

// ---------------------------------------------------------------------------
// The cylinder function itself.

struct AtomTerms {
  Point grad_x{0.0, 0.0, 0.0};  // spatial gradient at this atom
  double grad_y = 0.0;          // d/dy derivative (y = log mass)
  double lap_x = 0.0;           // spatial Laplacian contribution
  double lap_y = 0.0;           // mass-direction generator contribution
};

class CylinderFunction {
 public:
  CylinderFunction(std::vector<MarkFunction> phis, OuterFunction g)
      : phis_(std::move(phis)), g_(std::move(g)) {
    if (phis_.empty() || phis_.size() != g_.arity())
      throw std::domain_error("CylinderFunction: outer arity must match the mark count");
  }

  const std::vector<MarkFunction>& marks() const { return phis_; }
  const OuterFunction& outer() const { return g_; }

  // Smallest n with every chi supported in {s >= 1/n}.
  int level() const {
    int n = 1;
    for (const MarkFunction& p : phis_) n = std::max(n, p.chi.level());
    return n;
  }

  OuterFunction::Vec coordinates(const TorusSpace& sp, const DiscreteMeasure& eta) const {
    OuterFunction::Vec z{0.0, 0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < phis_.size(); ++k)
      z[k] = marked_pairing(sp, eta, phis_[k]);
    return z;
  }

  double value(const TorusSpace& sp, const DiscreteMeasure& eta) const {
    return g_.value(coordinates(sp, eta));
  }

  // Per-atom first and second order data; the generator, Dirichlet form and
  // integration-by-parts operators are all assembled from this.
  std::vector<AtomTerms> atom_terms(const TorusSpace& sp, const IntensityModel& model,
                                    const DiscreteMeasure& eta) const {
    const std::size_t n = phis_.size();
    const OuterFunction::Vec z = coordinates(sp, eta);
    const OuterFunction::Vec dg = g_.gradient(z);
    const OuterFunction::Mat hg = g_.hessian(z);

    std::vector<AtomTerms> out(eta.size());
    // Per-atom caches of chi jets, field values, gradients, Laplacians.
    std::array<MassProfile::Jet, OuterFunction::kMaxArity> cj;
    std::array<double, OuterFunction::kMaxArity> uv;
    std::array<Point, OuterFunction::kMaxArity> ug;
    std::array<double, OuterFunction::kMaxArity> ul;
    for (std::size_t a = 0; a < eta.size(); ++a) {
      const Atom& at = eta.atoms[a];
      const double drift = at.mass * model.log_derivative(at.mass);  // s l'/l
      for (std::size_t k = 0; k < n; ++k) {
        cj[k] = phis_[k].chi.jet(at.mass);
        uv[k] = phis_[k].u.value(sp, at.pos);
        ug[k] = phis_[k].u.gradient(sp, at.pos);
        ul[k] = phis_[k].u.laplacian(sp, at.pos);
      }
      AtomTerms t;
      for (std::size_t k = 0; k < n; ++k) {
        for (int i = 0; i < sp.dim; ++i)
          t.grad_x[static_cast<std::size_t>(i)] +=
              dg[k] * cj[k].v * ug[k][static_cast<std::size_t>(i)];
        t.grad_y += dg[k] * cj[k].dy * uv[k];
        t.lap_x += dg[k] * cj[k].v * ul[k];
        t.lap_y += dg[k] * (cj[k].dyy + drift * cj[k].dy) * uv[k];
      }
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) {
          double dot = 0.0;
          for (int i = 0; i < sp.dim; ++i)
            dot += ug[k][static_cast<std::size_t>(i)] * ug[l][static_cast<std::size_t>(i)];
          t.lap_x += hg[k][l] * cj[k].v * cj[l].v * dot;
          t.lap_y += hg[k][l] * cj[k].dy * cj[l].dy * uv[k] * uv[l];
        }
      out[a] = t;
    }
    return out;
  }

  // L F = 1/2 sum_atoms (Delta^X + Delta^R+) F.
  double generator(const TorusSpace& sp, const IntensityModel& model,
                   const DiscreteMeasure& eta) const {
    double r = 0.0;
    for (const AtomTerms& t : atom_terms(sp, model, eta)) r += t.lap_x + t.lap_y;
    return 0.5 * r;
  }

  // Derivative along the flow of v acting on positions.
  double directional_x(const TorusSpace& sp, const IntensityModel& model,
                       const DiscreteMeasure& eta, const VectorField& v) const {
    const std::vector<AtomTerms> ts = atom_terms(sp, model, eta);
    double r = 0.0;
    for (std::size_t a = 0; a < eta.size(); ++a) {
      const Point w = v.value(sp, eta.atoms[a].pos);
      for (int i = 0; i < sp.dim; ++i)
        r += w[static_cast<std::size_t>(i)] * ts[a].grad_x[static_cast<std::size_t>(i)];
    }
    return r;
  }

  // Derivative along t -> e^{t h} . eta acting on masses.
  double directional_mass(const TorusSpace& sp, const IntensityModel& model,
                          const DiscreteMeasure& eta, const ScalarField& h) const {
    const std::vector<AtomTerms> ts = atom_terms(sp, model, eta);
    double r = 0.0;
    for (std::size_t a = 0; a < eta.size(); ++a)
      r += h.value(sp, eta.atoms[a].pos) * ts[a].grad_y;
    return r;
  }

 private:
  std::vector<MarkFunction> phis_;
  OuterFunction g_;
};

// Carre-du-champ integrand 1/2 sum_atoms (grad F . grad G) combining both
// directions; the Dirichlet form is its expectation under the reference law.
inline double dirichlet_integrand(const TorusSpace& sp, const IntensityModel& model,
                                  const DiscreteMeasure& eta,
                                  const CylinderFunction& F, const CylinderFunction& G) {
  const std::vector<AtomTerms> tf = F.atom_terms(sp, model, eta);
  const std::vector<AtomTerms> tg = G.atom_terms(sp, model, eta);
  double r = 0.0;
  for (std::size_t a = 0; a < eta.size(); ++a) {
    for (int i = 0; i < sp.dim; ++i)
      r += tf[a].grad_x[static_cast<std::size_t>(i)] * tg[a].grad_x[static_cast<std::size_t>(i)];
    r += tf[a].grad_y * tg[a].grad_y;
  }
  return 0.5 * r;
}

// ---------------------------------------------------------------------------
// Single-particle forms of the mass-direction generators, used to cross-check
// the many-particle assembly and the one-atom semigroup.

// (Delta^R+ f)(s) for f(s) = chi(s): d^2/dy^2 + s(l'/l) d/dy at y = log s.
inline double mass_generator(const IntensityModel& model, const MassProfile& chi,
                             double s) {
  const MassProfile::Jet j = chi.jet(s);
  return j.dyy + s * model.log_derivative(s) * j.dy;
}

// Full one-particle generator on f(s, x) = chi(s) u(x).
inline double one_particle_generator(const TorusSpace& sp, const IntensityModel& model,
                                     const MassProfile& chi, const ScalarField& u,
                                     double s, const Point& x) {
  const MassProfile::Jet j = chi.jet(s);
  const double mass_part = (j.dyy + s * model.log_derivative(s) * j.dy) * u.value(sp, x);
  const double space_part = chi.value(s) * u.laplacian(sp, x);
  return 0.5 * (mass_part + space_part);
}

// The companion mass-direction operator that is symmetric with respect to
// l(s) ds rather than l(s)/s ds:  (1/2)(s f'' + s (l'/l) f').  In log-mass
// jets: s f'' = (d2log - dlog)/s and s f' = dlog, so s (l'/l) f' =
// (l'/l) dlog.  For the gamma kernel this is the Laguerre operator
// (s/2)(f'' - f').
inline double alt_mass_generator(const IntensityModel& model, const MassProfile& chi,
                                 double s) {
  const MassProfile::Jet j = chi.jet(s);
  return 0.5 * ((j.dyy - j.dy) / s + model.log_derivative(s) * j.dy);
}

}  // namespace levycone
