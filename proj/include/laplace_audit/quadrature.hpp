#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

namespace laplace_audit {

namespace detail {

inline double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double fa,
                                   double b, double fb, double fm, double whole, double tol,
                                   int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson(a, fa, m, fm, flm);
  double right = simpson(m, fm, b, fb, frm);
  double err = left + right - whole;
  if (depth <= 0 || std::abs(err) <= 15.0 * tol) return left + right + err / 15.0;
  return adaptive_simpson_rec(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Adaptive Simpson with Richardson correction; absolute tolerance.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12, int max_depth = 60) {
  if (!(a < b)) throw std::invalid_argument("integrate: need a < b");
  double m = 0.5 * (a + b);
  double fa = f(a), fb = f(b), fm = f(m);
  // split once up front so a symmetric integrand cannot fool the error estimate
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = detail::simpson(a, fa, m, fm, flm);
  double right = detail::simpson(m, fm, b, fb, frm);
  return detail::adaptive_simpson_rec(f, a, fa, m, fm, flm, left, 0.5 * tol, max_depth) +
         detail::adaptive_simpson_rec(f, m, fm, b, fb, frm, right, 0.5 * tol, max_depth);
}

}  // namespace laplace_audit
