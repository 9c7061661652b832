#pragma once
// Radon-Nikodym densities of the reference law under the group actions on
// the cone, together with the integration-by-parts operators they induce.
//
// For the mark action s_x -> theta(x) s_x the density against the reference
// law is
//
//   R_theta(eta) = exp[ sum_x log( l(s_x/theta(x)) / l(s_x) )
//                       + int_X int (l(s) - l(s/theta(x))) / s  ds dx ].
//
// Two compensator conventions coexist here and are kept deliberately
// separate:
//
//   * full:      the mass integral runs over (0, inf).  The inner integral
//                is a Frullani-type expression evaluated by an explicit
//                split quadrature (never by its telescoped closed form, so
//                closed-form cross-checks stay independent).
//   * truncated: the mass integral runs over [floor, inf) with the sampler's
//                floor.  With this convention R is exactly the exponential
//                martingale of the truncated Poisson measure, so identities
//                E[F(theta.eta)] = E[F(eta) R(eta)] hold with no truncation
//                bias for functionals supported above floor * max(1, sup
//                theta).
//
// The joint action (psi, theta).eta = sum_x theta(x) s_x delta_{psi(x)} is
// only partially quasi-invariant: restricted to levels {s >= 1/n} the
// density gains the spatial Jacobian of psi^{-1} per surviving atom.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "levycone/cone.hpp"
#include "levycone/intensity.hpp"
#include "levycone/quadrature.hpp"
#include "levycone/space.hpp"

namespace levycone {

// I(r) = int_0^inf (l(s) - l(rs)) / s ds by split quadrature: with y = log s
// and a cut at -Y, the part above the cut is integrated directly; the
// remainder below the cut telescopes (change of variables, no limit taken)
// into int_{-Y+log r}^{-Y} (l(e^z) - l(0)) dz, a genuine quadrature of the
// kernel's approach to its boundary value.  For fast-decaying kernels the
// correction is ~e^{-Y}; for slow kernels such as the smoothed log-power it
// carries the visible part of the answer, so it cannot be dropped.
inline double frullani_integral(const IntensityModel& model, double r,
                                double cut = 40.0) {
  if (!(r > 0.0) || !std::isfinite(r))
    throw std::domain_error("frullani_integral: r must be positive and finite");
  if (r == 1.0) return 0.0;
  const double head =
      integrate([&](double y) { return model.l(std::exp(y)) - model.l(r * std::exp(y)); },
                -cut, kInf, 1e-13, 12)
          .value;
  const double lr = std::log(r);
  const double tail =
      integrate([&](double z) { return model.l(std::exp(z)) - model.l_zero(); },
                -cut + std::min(lr, 0.0), -cut + std::max(lr, 0.0), 1e-13, 12)
          .value;
  return head + (lr < 0.0 ? tail : -tail);
}

namespace detail {

// int_floor^inf [l(s) - l(s e^{-a})] / s ds  (the ratio integral with
// theta = e^a held fixed), over the truncated mass range.  Substituting
// u = s e^{-a} in the subtracted term leaves the short-interval integral
// int_{log floor - a}^{log floor} l(e^y) dy; evaluating that form avoids the
// catastrophic cancellation of differencing two nearly equal kernels when a
// is small (the subtraction-form quadrature stays in the tests as an
// independent oracle).
inline double ratio_integral(const IntensityModel& model, double floor, double a) {
  if (a == 0.0) return 0.0;
  const double edge = std::log(floor);
  const double piece =
      integrate([&](double y) { return model.l(std::exp(y)); },
                std::min(edge - a, edge), std::max(edge - a, edge), 1e-13, 12)
          .value;
  // For a > 0 the shifted tail integral covers more of the line, so the
  // difference is minus the short piece.
  return a > 0.0 ? -piece : piece;
}

inline std::pair<Point, Point> inflate_box(const TorusSpace& sp,
                                           std::pair<Point, Point> box, double pad) {
  for (int i = 0; i < sp.dim; ++i) {
    const auto j = static_cast<std::size_t>(i);
    box.first[j] -= pad;
    box.second[j] += pad;
    if (box.second[j] - box.first[j] >= sp.side) {
      box.first[j] = 0.0;
      box.second[j] = sp.side;
    }
  }
  return box;
}

// Tabulate a smooth function of the field amplitude over [lo, hi].  The box
// quadratures below would otherwise re-run an adaptive mass integral at every
// spatial node; sampling it once on a dense grid keeps them cheap without
// giving up accuracy (the interpolant is O(h^4), far below the box
// tolerances).
template <class Fn>
SmoothTable amplitude_table(double lo, double hi, Fn&& fn) {
  // Widen degenerate or tiny ranges so the table stays well-conditioned.
  const double pad = std::max(1e-6, 1e-3 * (hi - lo));
  return SmoothTable(lo - pad, hi + pad, 513, std::forward<Fn>(fn));
}

}  // namespace detail

struct DensityValue {
  double atom_sum = 0.0;     // sum over contributing atoms of the log ratios
  double compensator = 0.0;  // configuration-independent exponent
  double log_density() const { return atom_sum + compensator; }
  double density() const { return std::exp(log_density()); }
};

// ---------------------------------------------------------------------------
// Density of the mark action eta -> theta . eta.

class ThetaDensity {
 public:
  ThetaDensity(TorusSpace sp, IntensityModel model, PositiveField theta, double floor)
      : sp_(sp), model_(std::move(model)), theta_(std::move(theta)), floor_(floor) {
    if (!(floor > 0.0) || !std::isfinite(floor))
      throw std::domain_error("ThetaDensity: floor must be positive and finite");
    const ScalarField& h = theta_.log_field();
    const auto box = h.support_box(sp_);
    const SmoothTable table = detail::amplitude_table(
        h.min_value(sp_), h.max_value(sp_),
        [&](double a) { return detail::ratio_integral(model_, floor_, a); });
    compensator_ = integrate_box(
                       [&](const Point& x) {
                         const double a = h.value(sp_, x);
                         return a == 0.0 ? 0.0 : table(a);
                       },
                       box.first, box.second, sp_.dim, 1e-10)
                       .value;
  }

  double floor() const { return floor_; }
  // Truncated-convention compensator (exact for the floored sampler).
  double compensator() const { return compensator_; }

  // Full-measure compensator int_X I(1/theta(x)) dx via the split Frullani
  // quadrature; the floor plays no role here.
  double full_compensator(double cut = 40.0) const {
    const ScalarField& h = theta_.log_field();
    const auto box = h.support_box(sp_);
    const SmoothTable table = detail::amplitude_table(
        h.min_value(sp_), h.max_value(sp_),
        [&](double a) { return frullani_integral(model_, std::exp(-a), cut); });
    return integrate_box(
               [&](const Point& x) {
                 const double a = h.value(sp_, x);
                 return a == 0.0 ? 0.0 : table(a);
               },
               box.first, box.second, sp_.dim, 1e-10)
        .value;
  }

  DensityValue log_density(const DiscreteMeasure& eta) const {
    DensityValue v;
    v.compensator = compensator_;
    for (const Atom& at : eta.atoms) {
      if (at.mass < floor_) continue;
      const double a = theta_.log_field().value(sp_, at.pos);
      if (a == 0.0) continue;  // theta = 1 there: the ratio is exactly 1
      v.atom_sum +=
          std::log(model_.l(at.mass / theta_.value(sp_, at.pos)) / model_.l(at.mass));
    }
    return v;
  }

 private:
  TorusSpace sp_;
  IntensityModel model_;
  PositiveField theta_;
  double floor_;
  double compensator_ = 0.0;
};

// ---------------------------------------------------------------------------
// Partial density of the joint action g = (flow of v at time T, theta) at
// level n: the exponential martingale of the restriction to {s >= 1/n}.

class PartialDensity {
 public:
  // max_step bounds the flow integrator's step; quad_tol is the tolerance of
  // the compensator box quadratures (each node of which runs a backward
  // flow, so relax it when the flow time is large and only modest accuracy
  // is needed).
  PartialDensity(TorusSpace sp, IntensityModel model, VectorField v, double flow_time,
                 PositiveField theta, int level, double max_step = 1e-3,
                 double quad_tol = 1e-9)
      : sp_(sp),
        model_(std::move(model)),
        v_(std::move(v)),
        time_(flow_time),
        theta_(std::move(theta)),
        max_step_(max_step) {
    if (level < 1) throw std::domain_error("PartialDensity: level must be >= 1");
    floor_ = 1.0 / static_cast<double>(level);

    const ScalarField& h = theta_.log_field();
    const bool unit_theta = h.min_value(sp_) == 0.0 && h.max_value(sp_) == 0.0;

    // Region where theta-tilde = theta o psi^{-1} differs from 1: the image
    // of supp theta under the flow, covered by inflating the support box by
    // the largest displacement the flow can produce.  For theta identically 1
    // the ratio term vanishes pointwise and no quadrature is run.
    double mark_part = 0.0;
    if (!unit_theta) {
      const SmoothTable ratio_table = detail::amplitude_table(
          h.min_value(sp_), h.max_value(sp_),
          [&](double a) { return detail::ratio_integral(model_, floor_, a); });
      const double pad =
          std::abs(time_) * v_.sup_norm_estimate(sp_) * 1.3 + 0.02 * sp_.side;
      const auto theta_box = detail::inflate_box(sp_, h.support_box(sp_), pad);
      mark_part = integrate_box(
                      [&](const Point& x) {
                        const double a = pull(x).log_theta;
                        return a == 0.0 ? 0.0 : ratio_table(a);
                      },
                      theta_box.first, theta_box.second, sp_.dim, quad_tol)
                      .value;
    }

    // Region where the backward Jacobian differs from 1.  Points outside
    // supp v never move, so their Jacobian is exactly 1 and the integrand is
    // supported in the (unpadded) support box of v.  A divergence-free field
    // contributes exactly nothing.
    double jac_part = 0.0;
    if (!v_.divergence_free() && time_ != 0.0) {
      const SmoothTable tail_table = detail::amplitude_table(
          h.min_value(sp_), h.max_value(sp_), [&](double a) {
            return lambda_interval(model_, floor_ * std::exp(-a), kInf);
          });
      const auto jac_box = v_.support_box(sp_);
      jac_part = integrate_box(
                     [&](const Point& x) {
                       const Pulled p = pull(x);
                       if (p.log_jac == 0.0) return 0.0;
                       return (1.0 - std::exp(p.log_jac)) * tail_table(p.log_theta);
                     },
                     jac_box.first, jac_box.second, sp_.dim, quad_tol)
                     .value;
    }
    compensator_ = mark_part + jac_part;
  }

  double floor() const { return floor_; }
  double compensator() const { return compensator_; }

  DensityValue log_density(const DiscreteMeasure& eta) const {
    DensityValue v;
    v.compensator = compensator_;
    for (const Atom& at : eta.atoms) {
      if (at.mass < floor_) continue;
      const Pulled p = pull(at.pos);
      if (p.log_theta != 0.0)
        v.atom_sum += std::log(model_.l(at.mass * std::exp(-p.log_theta)) /
                               model_.l(at.mass));
      v.atom_sum += p.log_jac;
    }
    return v;
  }

 private:
  struct Pulled {
    double log_theta = 0.0;  // log theta(psi^{-1}(x))
    double log_jac = 0.0;    // log Jacobian of psi^{-1} at x
  };

  Pulled pull(const Point& x) const {
    Pulled p;
    if (time_ == 0.0) {
      p.log_theta = theta_.log_field().value(sp_, x);
      return p;
    }
    const FlowResult back = flow(sp_, v_, -time_, x, max_step_);
    p.log_theta = theta_.log_field().value(sp_, back.position);
    p.log_jac = back.log_jacobian;
    return p;
  }

  TorusSpace sp_;
  IntensityModel model_;
  VectorField v_;
  double time_;
  PositiveField theta_;
  double max_step_;
  double floor_ = 0.0;
  double compensator_ = 0.0;
};

// ---------------------------------------------------------------------------
// Integration-by-parts operators.  With the conventions above,
//
//   E[ (d/dt F(psi_t^v . eta))|_0 ] + E[ F(eta) B_v(eta) ] = 0,
//   E[ (d/dt F(e^{t h} . eta))|_0 ] + E[ F(eta) B_h(eta) ] = 0,
//
// where B_v sums div v over atoms above the functional's level and B_h pairs
// the logarithmic intensity derivative with h, plus the boundary weight
// l(floor) (which tends to l(0) as the floor is removed).

inline double ibp_b_space(const TorusSpace& sp, const DiscreteMeasure& eta,
                          const VectorField& v, double floor) {
  double r = 0.0;
  for (const Atom& at : eta.atoms)
    if (at.mass >= floor) r += v.divergence(sp, at.pos);
  return r;
}

inline double ibp_b_mass(const TorusSpace& sp, const IntensityModel& model,
                         const DiscreteMeasure& eta, const ScalarField& h,
                         double floor) {
  double r = 0.0;
  for (const Atom& at : eta.atoms)
    if (at.mass >= floor)
      r += at.mass * model.log_derivative(at.mass) * h.value(sp, at.pos);
  return r + model.l(floor) * h.integral(sp);
}

}  // namespace levycone
