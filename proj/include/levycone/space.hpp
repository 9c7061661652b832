#pragma once
// The base space X: a flat torus [0, L)^d, d <= 3, together with the smooth
// test fields used to build cylinder functions and group actions: compactly
// supported mollifier bumps, Fourier eigenfunctions, vector fields (optionally
// exactly divergence-free), their flows with log-Jacobians, and the Brownian
// stepping kernel.
//
// A torus stands in for a general manifold: it is compact without boundary,
// so integration by parts carries no boundary terms, while flows and heat
// kernels stay elementary.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "levycone/quadrature.hpp"
#include "levycone/rng.hpp"

namespace levycone {

using Point = std::array<double, 3>;  // coords beyond the dimension stay 0

struct TorusSpace {
  int dim = 2;
  double side = 1.0;

  TorusSpace() = default;
  TorusSpace(int d, double L) : dim(d), side(L) {
    if (d < 1 || d > 3) throw std::domain_error("TorusSpace: dim must be 1..3");
    if (!(L > 0.0)) throw std::domain_error("TorusSpace: side must be > 0");
  }
  double volume() const {
    double v = 1.0;
    for (int i = 0; i < dim; ++i) v *= side;
    return v;
  }
};

inline Point wrap(const TorusSpace& sp, Point x) {
  for (int i = 0; i < sp.dim; ++i) {
    x[static_cast<std::size_t>(i)] -=
        sp.side * std::floor(x[static_cast<std::size_t>(i)] / sp.side);
    if (x[static_cast<std::size_t>(i)] == sp.side) x[static_cast<std::size_t>(i)] = 0.0;
  }
  return x;
}

// Minimal-image displacement to - from, components in [-L/2, L/2).
inline Point displacement(const TorusSpace& sp, const Point& from, const Point& to) {
  Point d{0.0, 0.0, 0.0};
  for (int i = 0; i < sp.dim; ++i) {
    const auto k = static_cast<std::size_t>(i);
    double v = to[k] - from[k];
    v -= sp.side * std::round(v / sp.side);
    if (v == sp.side / 2.0) v = -sp.side / 2.0;
    d[k] = v;
  }
  return d;
}

inline double d_X(const TorusSpace& sp, const Point& a, const Point& b) {
  const Point d = displacement(sp, a, b);
  double q = 0.0;
  for (int i = 0; i < sp.dim; ++i) q += d[static_cast<std::size_t>(i)] * d[static_cast<std::size_t>(i)];
  return std::sqrt(q);
}

// Volume of the metric ball B(x0, r) on the torus; exact for d <= 2,
// midpoint-grid with one refinement for d = 3.
inline double torus_ball_volume(const TorusSpace& sp, double r) {
  if (!(r >= 0.0)) throw std::domain_error("torus_ball_volume: r must be >= 0");
  const double L = sp.side;
  if (sp.dim == 1) return std::min(2.0 * r, L);
  if (sp.dim == 2) {
    if (2.0 * r <= L) return M_PI * r * r;
    if (2.0 * r * r <= L * L)
      return M_PI * r * r -
             4.0 * (r * r * std::acos(L / (2.0 * r)) -
                    (L / 2.0) * std::sqrt(r * r - L * L / 4.0));
    return L * L;
  }
  auto grid_estimate = [&](int n) {
    long long inside = 0;
    const double h = L / n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          double dx = std::abs((i + 0.5) * h - L / 2.0);
          double dy = std::abs((j + 0.5) * h - L / 2.0);
          double dz = std::abs((k + 0.5) * h - L / 2.0);
          if (dx * dx + dy * dy + dz * dz < r * r) ++inside;
        }
    return static_cast<double>(inside) * h * h * h;
  };
  const double a = grid_estimate(96), b = grid_estimate(192);
  return 2.0 * b - a;  // Richardson-style touch-up of the O(h) surface error
}

// ---------------------------------------------------------------------------
// Scalar test fields.

class ScalarField {
 public:
  enum class Kind { kBump, kFourier };

  // Smooth mollifier bump: amp * exp(1 - 1/(1 - |x-c|^2/R^2)) inside the ball
  // of radius R around c, identically zero outside; C^infty everywhere.
  static ScalarField bump(Point center, double radius, double amplitude) {
    if (!(radius > 0.0)) throw std::domain_error("ScalarField::bump: radius must be > 0");
    ScalarField f;
    f.kind_ = Kind::kBump;
    f.center_ = center;
    f.radius_ = radius;
    f.amp_ = amplitude;
    return f;
  }

  // amp * cos(2 pi k.x / L + phase): Laplace eigenfunction on the torus.
  static ScalarField fourier(std::array<int, 3> wave, double amplitude,
                             double phase = 0.0) {
    ScalarField f;
    f.kind_ = Kind::kFourier;
    f.wave_ = wave;
    f.amp_ = amplitude;
    f.phase_ = phase;
    return f;
  }

  static ScalarField zero() { return fourier({0, 0, 0}, 0.0, 0.0); }

  Kind kind() const { return kind_; }
  double amplitude() const { return amp_; }
  double radius() const { return radius_; }
  const Point& center() const { return center_; }
  const std::array<int, 3>& wave() const { return wave_; }
  double phase() const { return phase_; }

  // For a Fourier mode, the eigenvalue q of -Laplace (so Laplace u = -q u and
  // the heat semigroup scales the mode by e^{-q t / 2}).  Bump fields are not
  // eigenfunctions.
  double laplace_eigenvalue(const TorusSpace& sp) const {
    if (kind_ != Kind::kFourier)
      throw std::domain_error(
          "laplace_eigenvalue: only Fourier modes are eigenfunctions");
    double q = 0.0;
    for (int i = 0; i < sp.dim; ++i) {
      const double w =
          2.0 * M_PI * wave_[static_cast<std::size_t>(i)] / sp.side;
      q += w * w;
    }
    return q;
  }

  double value(const TorusSpace& sp, const Point& x) const {
    switch (kind_) {
      case Kind::kBump: {
        check_radius(sp);
        const double q = q_of(sp, x);
        if (q >= 1.0 - 1e-12) return 0.0;
        return amp_ * std::exp(1.0 - 1.0 / (1.0 - q));
      }
      case Kind::kFourier:
        return amp_ * std::cos(arg(sp, x));
    }
    return 0.0;
  }

  Point gradient(const TorusSpace& sp, const Point& x) const {
    Point g{0.0, 0.0, 0.0};
    switch (kind_) {
      case Kind::kBump: {
        check_radius(sp);
        const Point d = displacement(sp, center_, x);
        const double q = q_of(sp, x);
        if (q >= 1.0 - 1e-12) return g;
        const double u = std::exp(1.0 - 1.0 / (1.0 - q));
        const double up = -u / ((1.0 - q) * (1.0 - q));
        for (int i = 0; i < sp.dim; ++i)
          g[static_cast<std::size_t>(i)] =
              amp_ * up * 2.0 * d[static_cast<std::size_t>(i)] / (radius_ * radius_);
        return g;
      }
      case Kind::kFourier: {
        const double s = -amp_ * std::sin(arg(sp, x));
        for (int i = 0; i < sp.dim; ++i)
          g[static_cast<std::size_t>(i)] =
              s * 2.0 * M_PI * wave_[static_cast<std::size_t>(i)] / sp.side;
        return g;
      }
    }
    return g;
  }

  double laplacian(const TorusSpace& sp, const Point& x) const {
    switch (kind_) {
      case Kind::kBump: {
        check_radius(sp);
        const double q = q_of(sp, x);
        if (q >= 1.0 - 1e-12) return 0.0;
        const double om = 1.0 - q;
        const double u = std::exp(1.0 - 1.0 / om);
        const double up = -u / (om * om);
        const double upp = u / (om * om * om * om) - 2.0 * u / (om * om * om);
        const double r2 = radius_ * radius_;
        return amp_ * (upp * 4.0 * q / r2 + up * 2.0 * sp.dim / r2);
      }
      case Kind::kFourier: {
        double k2 = 0.0;
        for (int i = 0; i < sp.dim; ++i) {
          const double ki = wave_[static_cast<std::size_t>(i)];
          k2 += ki * ki;
        }
        const double w = 2.0 * M_PI / sp.side;
        return -w * w * k2 * value(sp, x);
      }
    }
    return 0.0;
  }

  // int_X f dx (the bump never self-overlaps because R < L/2).
  double integral(const TorusSpace& sp) const {
    switch (kind_) {
      case Kind::kBump: {
        check_radius(sp);
        auto profile = [](double t) { return std::exp(1.0 - 1.0 / (1.0 - t * t)); };
        double c = 0.0;
        if (sp.dim == 1)
          c = 2.0 * integrate([&](double t) { return profile(t); }, 0.0, 1.0 - 1e-14).value;
        else if (sp.dim == 2)
          c = 2.0 * M_PI *
              integrate([&](double t) { return profile(t) * t; }, 0.0, 1.0 - 1e-14).value;
        else
          c = 4.0 * M_PI *
              integrate([&](double t) { return profile(t) * t * t; }, 0.0, 1.0 - 1e-14).value;
        double rd = 1.0;
        for (int i = 0; i < sp.dim; ++i) rd *= radius_;
        return amp_ * rd * c;
      }
      case Kind::kFourier: {
        bool constant = true;
        for (int i = 0; i < sp.dim; ++i)
          if (wave_[static_cast<std::size_t>(i)] != 0) constant = false;
        return constant ? amp_ * std::cos(phase_) * sp.volume() : 0.0;
      }
    }
    return 0.0;
  }

  double max_value(const TorusSpace& sp) const {
    switch (kind_) {
      case Kind::kBump:
        check_radius(sp);
        return std::max(amp_, 0.0);
      case Kind::kFourier: {
        bool constant = true;
        for (int i = 0; i < sp.dim; ++i)
          if (wave_[static_cast<std::size_t>(i)] != 0) constant = false;
        return constant ? amp_ * std::cos(phase_) : std::abs(amp_);
      }
    }
    return 0.0;
  }

  double min_value(const TorusSpace& sp) const {
    switch (kind_) {
      case Kind::kBump:
        check_radius(sp);
        return std::min(amp_, 0.0);
      case Kind::kFourier: {
        bool constant = true;
        for (int i = 0; i < sp.dim; ++i)
          if (wave_[static_cast<std::size_t>(i)] != 0) constant = false;
        return constant ? amp_ * std::cos(phase_) : -std::abs(amp_);
      }
    }
    return 0.0;
  }

  double max_abs(const TorusSpace& sp) const {
    return std::max(std::abs(max_value(sp)), std::abs(min_value(sp)));
  }

  // Axis-aligned box containing the support, in unwrapped coordinates (the
  // field is periodic, so a box crossing 0 is fine for quadrature).
  std::pair<Point, Point> support_box(const TorusSpace& sp) const {
    Point lo{0.0, 0.0, 0.0}, hi{0.0, 0.0, 0.0};
    if (kind_ == Kind::kBump) {
      check_radius(sp);
      for (int i = 0; i < sp.dim; ++i) {
        lo[static_cast<std::size_t>(i)] = center_[static_cast<std::size_t>(i)] - radius_;
        hi[static_cast<std::size_t>(i)] = center_[static_cast<std::size_t>(i)] + radius_;
      }
      return {lo, hi};
    }
    for (int i = 0; i < sp.dim; ++i) hi[static_cast<std::size_t>(i)] = sp.side;
    return {lo, hi};
  }

 private:
  ScalarField() = default;
  void check_radius(const TorusSpace& sp) const {
    if (!(radius_ < sp.side / 2.0))
      throw std::domain_error("ScalarField::bump: radius must be < side/2");
  }
  double q_of(const TorusSpace& sp, const Point& x) const {
    const Point d = displacement(sp, center_, x);
    double q = 0.0;
    for (int i = 0; i < sp.dim; ++i) q += d[static_cast<std::size_t>(i)] * d[static_cast<std::size_t>(i)];
    return q / (radius_ * radius_);
  }
  double arg(const TorusSpace& sp, const Point& x) const {
    double a = phase_;
    for (int i = 0; i < sp.dim; ++i)
      a += 2.0 * M_PI * wave_[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)] / sp.side;
    return a;
  }

  Kind kind_ = Kind::kFourier;
  Point center_{0.0, 0.0, 0.0};
  double radius_ = 0.0;
  double amp_ = 0.0;
  double phase_ = 0.0;
  std::array<int, 3> wave_{0, 0, 0};
};

// theta = exp(h): a strictly positive multiplier equal to 1 off supp h, with
// exact extremes inherited from h.
class PositiveField {
 public:
  explicit PositiveField(ScalarField h) : h_(h) {}
  double value(const TorusSpace& sp, const Point& x) const {
    return std::exp(h_.value(sp, x));
  }
  double inf(const TorusSpace& sp) const { return std::exp(h_.min_value(sp)); }
  double sup(const TorusSpace& sp) const { return std::exp(h_.max_value(sp)); }
  const ScalarField& log_field() const { return h_; }

 private:
  ScalarField h_;
};

// ---------------------------------------------------------------------------
// Vector fields.

class VectorField {
 public:
  enum class Kind { kComponents, kCurl };

  static VectorField components(std::vector<ScalarField> comps) {
    if (comps.empty() || comps.size() > 3)
      throw std::domain_error("VectorField: need 1..3 components");
    VectorField v;
    v.kind_ = Kind::kComponents;
    v.comps_ = std::move(comps);
    return v;
  }

  // Rotated gradient of a stream function (d = 2 only): exactly
  // divergence-free, supported where the stream bump lives.
  static VectorField curl(ScalarField stream) {
    VectorField v;
    v.kind_ = Kind::kCurl;
    v.comps_ = {stream};
    return v;
  }

  Kind kind() const { return kind_; }
  bool divergence_free() const { return kind_ == Kind::kCurl; }

  // Box containing the support of the field (and hence of its divergence).
  std::pair<Point, Point> support_box(const TorusSpace& sp) const {
    auto box = comps_[0].support_box(sp);
    for (std::size_t k = 1; k < comps_.size(); ++k) {
      const auto bk = comps_[k].support_box(sp);
      for (int i = 0; i < sp.dim; ++i) {
        const auto j = static_cast<std::size_t>(i);
        box.first[j] = std::min(box.first[j], bk.first[j]);
        box.second[j] = std::max(box.second[j], bk.second[j]);
      }
    }
    return box;
  }

  // Crude uniform bound on |v| from a grid scan, for box-inflation purposes.
  double sup_norm_estimate(const TorusSpace& sp, int grid = 129) const {
    double m = 0.0;
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < (sp.dim >= 2 ? grid : 1); ++j)
        for (int k = 0; k < (sp.dim >= 3 ? grid : 1); ++k) {
          const Point x{sp.side * i / grid, sp.side * j / grid, sp.side * k / grid};
          const Point w = value(sp, x);
          double q = 0.0;
          for (int c = 0; c < sp.dim; ++c)
            q += w[static_cast<std::size_t>(c)] * w[static_cast<std::size_t>(c)];
          m = std::max(m, q);
        }
    return std::sqrt(m);
  }

  Point value(const TorusSpace& sp, const Point& x) const {
    Point out{0.0, 0.0, 0.0};
    if (kind_ == Kind::kCurl) {
      if (sp.dim != 2)
        throw std::domain_error("VectorField::curl: only defined for dim = 2");
      const Point g = comps_[0].gradient(sp, x);
      out[0] = g[1];
      out[1] = -g[0];
      return out;
    }
    if (static_cast<int>(comps_.size()) != sp.dim)
      throw std::domain_error("VectorField: component count != dim");
    for (int i = 0; i < sp.dim; ++i)
      out[static_cast<std::size_t>(i)] = comps_[static_cast<std::size_t>(i)].value(sp, x);
    return out;
  }

  double divergence(const TorusSpace& sp, const Point& x) const {
    if (kind_ == Kind::kCurl) {
      if (sp.dim != 2)
        throw std::domain_error("VectorField::curl: only defined for dim = 2");
      return 0.0;  // mixed partials cancel identically
    }
    if (static_cast<int>(comps_.size()) != sp.dim)
      throw std::domain_error("VectorField: component count != dim");
    double d = 0.0;
    for (int i = 0; i < sp.dim; ++i)
      d += comps_[static_cast<std::size_t>(i)].gradient(sp, x)[static_cast<std::size_t>(i)];
    return d;
  }

 private:
  VectorField() = default;
  Kind kind_ = Kind::kComponents;
  std::vector<ScalarField> comps_;
};

// ---------------------------------------------------------------------------
// Flow of a vector field with its volume distortion.

struct FlowResult {
  Point position{0.0, 0.0, 0.0};
  double log_jacobian = 0.0;
};

inline FlowResult flow(const TorusSpace& sp, const VectorField& v, double t,
                       const Point& x0, double max_step = 1e-3) {
  if (!(std::abs(t) <= 10.0))
    throw std::domain_error("flow: |t| must be <= 10");
  if (!(max_step > 0.0) || max_step > 0.1)
    throw std::domain_error("flow: max_step must lie in (0, 0.1]");
  const long long n = t == 0.0 ? 0 : static_cast<long long>(std::ceil(std::abs(t) / max_step));
  FlowResult r;
  r.position = x0;
  if (n == 0) return r;
  const double h = t / static_cast<double>(n);
  Point p = x0;
  double lj = 0.0;
  auto deriv = [&](const Point& q, Point& dp, double& dj) {
    dp = v.value(sp, q);
    dj = v.divergence(sp, q);
  };
  for (long long step = 0; step < n; ++step) {
    Point k1p, k2p, k3p, k4p;
    double k1j, k2j, k3j, k4j;
    deriv(p, k1p, k1j);
    Point q2 = p;
    for (int i = 0; i < sp.dim; ++i) q2[static_cast<std::size_t>(i)] += 0.5 * h * k1p[static_cast<std::size_t>(i)];
    deriv(q2, k2p, k2j);
    Point q3 = p;
    for (int i = 0; i < sp.dim; ++i) q3[static_cast<std::size_t>(i)] += 0.5 * h * k2p[static_cast<std::size_t>(i)];
    deriv(q3, k3p, k3j);
    Point q4 = p;
    for (int i = 0; i < sp.dim; ++i) q4[static_cast<std::size_t>(i)] += h * k3p[static_cast<std::size_t>(i)];
    deriv(q4, k4p, k4j);
    for (int i = 0; i < sp.dim; ++i) {
      const auto k = static_cast<std::size_t>(i);
      p[k] += h / 6.0 * (k1p[k] + 2.0 * k2p[k] + 2.0 * k3p[k] + k4p[k]);
      if (!std::isfinite(p[k])) throw std::runtime_error("flow: state diverged");
    }
    lj += h / 6.0 * (k1j + 2.0 * k2j + 2.0 * k3j + k4j);
  }
  r.position = wrap(sp, p);
  r.log_jacobian = lj;
  return r;
}

inline double flow_jacobian(const TorusSpace& sp, const VectorField& v, double t,
                            const Point& x0, double max_step = 1e-3) {
  return std::exp(flow(sp, v, t, x0, max_step).log_jacobian);
}

// One exact Brownian step of variance dt per coordinate, wrapped.
inline Point brownian_increment(const TorusSpace& sp, const Point& x, double dt,
                                RandomStream& rs) {
  if (!(dt >= 0.0)) throw std::domain_error("brownian_increment: dt must be >= 0");
  Point y = x;
  if (dt == 0.0) return wrap(sp, y);
  const double sd = std::sqrt(dt);
  for (int i = 0; i < sp.dim; ++i)
    y[static_cast<std::size_t>(i)] += sd * rs.normal();
  return wrap(sp, y);
}

}  // namespace levycone
