#pragma once
// Adaptive quadrature used throughout the library.  Thin wrapper over
// boost::math gauss_kronrod so every call site gets a value plus an error
// estimate, log-substituted variants for integrands living on (0, inf)
// against ds/s, and a small tensor rule for integrals over boxes in the
// base space (d <= 3).

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace levycone {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QuadResult {
  double value = 0.0;
  double error = 0.0;  // estimated absolute error
};

inline constexpr double kQuadTol = 1e-12;
// Depth 10 caps an adaptive call at 2^10 subintervals; deeper recursion never
// buys accuracy for the smooth integrands here but can grind nearly forever
// on regions where the integrand has underflowed to zero.
inline constexpr int kQuadDepth = 10;

// Integral of f over [a, b]; either endpoint may be infinite.
template <class F>
QuadResult integrate(F&& f, double a, double b, double tol = kQuadTol,
                     int max_depth = kQuadDepth) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  QuadResult r;
  double l1 = 0.0;
  r.value = GK::integrate(std::forward<F>(f), a, b,
                          static_cast<unsigned>(max_depth), tol, &r.error, &l1);
  return r;
}

// Integral of g(s) ds/s over [a, b], 0 < a < b <= inf, computed in y = log s
// where the measure is flat:  int g(e^y) dy.
template <class G>
QuadResult integrate_dlog(G&& g, double a, double b, double tol = kQuadTol) {
  if (!(a > 0.0) || !(b > a))
    throw std::domain_error("integrate_dlog: need 0 < a < b");
  const double ylo = std::log(a);
  const double yhi = std::isinf(b) ? std::numeric_limits<double>::infinity()
                                   : std::log(b);
  return integrate([&](double y) { return g(std::exp(y)); }, ylo, yhi, tol);
}

// Integral of f over the box prod [lo_i, hi_i], dim <= 3, by nested adaptive
// quadrature.  Cost grows with dimension; intended for one-off constants.
inline QuadResult integrate_box(const std::function<double(const std::array<double, 3>&)>& f,
                                const std::array<double, 3>& lo,
                                const std::array<double, 3>& hi, int dim,
                                double tol = 1e-10) {
  if (dim < 1 || dim > 3) throw std::domain_error("integrate_box: dim must be 1..3");
  std::array<double, 3> x{0.0, 0.0, 0.0};
  double err_inner = 0.0;  // worst inner error estimate observed
  std::function<double(int)> level = [&](int axis) -> double {
    if (axis == dim) return f(x);
    auto slice = [&](double t) {
      x[static_cast<std::size_t>(axis)] = t;
      return level(axis + 1);
    };
    QuadResult r = integrate(slice, lo[static_cast<std::size_t>(axis)],
                             hi[static_cast<std::size_t>(axis)], tol);
    if (axis > 0) err_inner = std::max(err_inner, r.error);
    return r.value;
  };
  QuadResult out;
  auto outer = [&](double t) {
    x[0] = t;
    return level(1);
  };
  QuadResult r = integrate(outer, lo[0], hi[0], tol);
  out.value = r.value;
  // Crude combined estimate: outer error plus propagated inner estimate.
  double width = 1.0;
  for (int k = 1; k < dim; ++k)
    width *= hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)];
  out.error = r.error + err_inner * (hi[0] - lo[0]) * width;
  return out;
}

// Dense-grid cubic Hermite interpolant of a smooth function on [lo, hi].
// Values are sampled once at n uniform nodes; node slopes come from
// fourth-order finite differences of the samples, so the interpolant is
// O(h^4)-accurate for smooth data.  Purpose: amortize an expensive
// one-dimensional integral that is then composed with a field and fed to a
// multi-dimensional quadrature, which would otherwise re-evaluate it at
// every node of every nesting level.
class SmoothTable {
 public:
  template <class Fn>
  SmoothTable(double lo, double hi, int n, Fn&& fn) : lo_(lo), hi_(hi) {
    if (!(hi > lo) || n < 7)
      throw std::domain_error("SmoothTable: need hi > lo and n >= 7");
    const auto m = static_cast<std::size_t>(n);
    values_.resize(m);
    slopes_.resize(m);
    h_ = (hi - lo) / (n - 1);
    for (std::size_t i = 0; i < m; ++i)
      values_[i] = fn(lo + h_ * static_cast<double>(i));
    const std::vector<double>& v = values_;
    const double d = 12.0 * h_;
    slopes_[0] = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] -
                  3.0 * v[4]) / d;
    slopes_[1] =
        (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / d;
    for (std::size_t i = 2; i + 2 < m; ++i)
      slopes_[i] = (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / d;
    slopes_[m - 2] = (3.0 * v[m - 1] + 10.0 * v[m - 2] - 18.0 * v[m - 3] +
                      6.0 * v[m - 4] - v[m - 5]) / d;
    slopes_[m - 1] = (25.0 * v[m - 1] - 48.0 * v[m - 2] + 36.0 * v[m - 3] -
                      16.0 * v[m - 4] + 3.0 * v[m - 5]) / d;
  }

  // Clamped evaluation; inputs outside [lo, hi] take the endpoint value.
  double operator()(double x) const {
    if (x <= lo_) return values_.front();
    if (x >= hi_) return values_.back();
    auto i = static_cast<std::size_t>((x - lo_) / h_);
    if (i > values_.size() - 2) i = values_.size() - 2;
    const double t = (x - (lo_ + h_ * static_cast<double>(i))) / h_;
    const double t2 = t * t;
    const double t3 = t2 * t;
    return values_[i] * (2.0 * t3 - 3.0 * t2 + 1.0) +
           slopes_[i] * h_ * (t3 - 2.0 * t2 + t) +
           values_[i + 1] * (-2.0 * t3 + 3.0 * t2) +
           slopes_[i + 1] * h_ * (t3 - t2);
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  double lo_;
  double hi_;
  double h_ = 0.0;
  std::vector<double> values_;
  std::vector<double> slopes_;
};

}  // namespace levycone
